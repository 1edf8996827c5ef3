#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace skrl {

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major f32 tensor. Rank is usually 1 or 2.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel(shape), 0.0f);
    }

    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if ((size_t) numel(shape) != data.size()) {
            throw shape_error("tensor data length does not match shape");
        }
    }

    static int64_t numel(const std::vector<int> & s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) {
                throw shape_error("negative dimension");
            }
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, float v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(float v) { return Tensor({1}, {v}); }

    static Tensor identity(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) {
            t.data[(size_t) i * n + i] = 1.0f;
        }
        return t;
    }

    int64_t size() const { return (int64_t) data.size(); }

    int rank() const { return (int) shape.size(); }

    // 2-d accessors; a rank-1 tensor behaves as a single row
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    float & at(int r, int c) { return data[(size_t) r * cols() + c]; }
    float at(int r, int c) const { return data[(size_t) r * cols() + c]; }

    bool same_shape(const Tensor & o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void check_same_shape(const Tensor & a, const Tensor & b, const char * op) {
    if (!a.same_shape(b)) {
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

} // namespace skrl
