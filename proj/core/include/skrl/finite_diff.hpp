#pragma once

#include "skrl/params.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace skrl {

struct oracle_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Central-difference gradient check against analytic grads already stored in
// the ParamStore. f must be a deterministic scalar function of the parameter
// values; determinism is verified with a double evaluation.
// Returns |analytic - central| / max(1, |central|) per coordinate, keyed by
// parameter name.
inline std::map<std::string, std::vector<double>> finite_diff_check(
        const std::function<double()> & f, ParamStore & params, double h) {
    if (h <= 0.0) {
        throw oracle_error("finite_diff_check: h must be positive");
    }
    const double f0 = f();
    if (f() != f0) {
        throw oracle_error("finite_diff_check: f is not deterministic");
    }
    std::map<std::string, std::vector<double>> errors;
    for (Param & p : params.all()) {
        std::vector<double> errs(p.value.data.size(), 0.0);
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const float saved = p.value.data[i];
            // use the deltas that are actually representable in f32
            const float xp = saved + (float) h;
            const float xm = saved - (float) h;
            p.value.data[i] = xp;
            const double fp = f();
            p.value.data[i] = xm;
            const double fm = f();
            p.value.data[i] = saved;
            const double central = (fp - fm) / ((double) xp - (double) xm);
            const double analytic = p.grad.data[i];
            errs[i] = std::fabs(analytic - central) / std::max(1.0, std::fabs(central));
        }
        errors[p.name] = std::move(errs);
    }
    return errors;
}

inline double max_rel_error(const std::map<std::string, std::vector<double>> & errors) {
    double mx = 0.0;
    for (const auto & [name, errs] : errors) {
        for (double e : errs) {
            mx = std::max(mx, e);
        }
    }
    return mx;
}

} // namespace skrl
