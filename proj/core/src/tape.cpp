#include "skrl/tape.hpp"

#include <algorithm>
#include <cmath>

namespace skrl {
namespace ops {

static void matmul_acc(const float * a, const float * b, float * out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float * arow = a + (size_t) i * k;
        float * orow = out + (size_t) i * n;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            if (av == 0.0f) {
                continue;
            }
            const float * brow = b + (size_t) p * n;
            for (int j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
}

NodeId matmul(Tape & t, NodeId a, NodeId b) {
    const Tensor & av = t.value(a);
    const Tensor & bv = t.value(b);
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) {
        throw shape_error("matmul: inner dims " + av.shape_str() + " vs " + bv.shape_str());
    }
    Tensor out({m, n});
    matmul_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    return t.record(std::move(out), {a, b}, [a, b, m, k, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & av2 = tp.value(a);
        const Tensor & bv2 = tp.value(b);
        if (tp.requires_grad(a)) {
            // dA = G · B^T
            Tensor & ga = tp.grad(a);
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    float s = 0.0f;
                    const float * grow = g.data.data() + (size_t) i * n;
                    const float * brow = bv2.data.data() + (size_t) p * n;
                    for (int j = 0; j < n; ++j) {
                        s += grow[j] * brow[j];
                    }
                    ga.data[(size_t) i * k + p] += s;
                }
            }
        }
        if (tp.requires_grad(b)) {
            // dB = A^T · G
            Tensor & gb = tp.grad(b);
            for (int i = 0; i < m; ++i) {
                const float * arow = av2.data.data() + (size_t) i * k;
                const float * grow = g.data.data() + (size_t) i * n;
                for (int p = 0; p < k; ++p) {
                    const float apv = arow[p];
                    if (apv == 0.0f) {
                        continue;
                    }
                    float * gbrow = gb.data.data() + (size_t) p * n;
                    for (int j = 0; j < n; ++j) {
                        gbrow[j] += apv * grow[j];
                    }
                }
            }
        }
    });
}

NodeId transpose(Tape & t, NodeId a) {
    const Tensor & av = t.value(a);
    const int m = av.rows(), n = av.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.at(j, i) = av.at(i, j);
        }
    }
    return t.record(std::move(out), {a}, [a, m, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & ga = tp.grad(a);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += g.at(j, i);
            }
        }
    });
}

NodeId add(Tape & t, NodeId a, NodeId b) {
    const Tensor & av = t.value(a);
    const Tensor & bv = t.value(b);
    check_same_shape(av, bv, "add");
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += bv.data[i];
    }
    return t.record(std::move(out), {a, b}, [a, b](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        for (NodeId in : {a, b}) {
            if (tp.requires_grad(in)) {
                Tensor & gi = tp.grad(in);
                for (size_t i = 0; i < g.data.size(); ++i) {
                    gi.data[i] += g.data[i];
                }
            }
        }
    });
}

NodeId sub(Tape & t, NodeId a, NodeId b) {
    return add(t, a, scale(t, b, -1.0f));
}

NodeId mul(Tape & t, NodeId a, NodeId b) {
    const Tensor & av = t.value(a);
    const Tensor & bv = t.value(b);
    check_same_shape(av, bv, "mul");
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= bv.data[i];
    }
    return t.record(std::move(out), {a, b}, [a, b](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        if (tp.requires_grad(a)) {
            Tensor & ga = tp.grad(a);
            const Tensor & bv2 = tp.value(b);
            for (size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i] * bv2.data[i];
            }
        }
        if (tp.requires_grad(b)) {
            Tensor & gb = tp.grad(b);
            const Tensor & av2 = tp.value(a);
            for (size_t i = 0; i < g.data.size(); ++i) {
                gb.data[i] += g.data[i] * av2.data[i];
            }
        }
    });
}

NodeId scale(Tape & t, NodeId a, float c) {
    Tensor out = t.value(a);
    for (float & v : out.data) {
        v *= c;
    }
    return t.record(std::move(out), {a}, [a, c](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += c * g.data[i];
        }
    });
}

NodeId add_row_vector(Tape & t, NodeId a, NodeId v) {
    const Tensor & av = t.value(a);
    const Tensor & vv = t.value(v);
    const int m = av.rows(), n = av.cols();
    if (vv.size() != n) {
        throw shape_error("add_row_vector: " + av.shape_str() + " vs " + vv.shape_str());
    }
    Tensor out = av;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.at(i, j) += vv.data[j];
        }
    }
    return t.record(std::move(out), {a, v}, [a, v, m, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        if (tp.requires_grad(a)) {
            Tensor & ga = tp.grad(a);
            for (size_t i = 0; i < g.data.size(); ++i) {
                ga.data[i] += g.data[i];
            }
        }
        if (tp.requires_grad(v)) {
            Tensor & gv = tp.grad(v);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gv.data[j] += g.at(i, j);
                }
            }
        }
    });
}

NodeId mul_row_vector(Tape & t, NodeId a, NodeId v) {
    const Tensor & av = t.value(a);
    const Tensor & vv = t.value(v);
    const int m = av.rows(), n = av.cols();
    if (vv.size() != n) {
        throw shape_error("mul_row_vector: " + av.shape_str() + " vs " + vv.shape_str());
    }
    Tensor out = av;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.at(i, j) *= vv.data[j];
        }
    }
    return t.record(std::move(out), {a, v}, [a, v, m, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        if (tp.requires_grad(a)) {
            Tensor & ga = tp.grad(a);
            const Tensor & vv2 = tp.value(v);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    ga.at(i, j) += g.at(i, j) * vv2.data[j];
                }
            }
        }
        if (tp.requires_grad(v)) {
            Tensor & gv = tp.grad(v);
            const Tensor & av2 = tp.value(a);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gv.data[j] += g.at(i, j) * av2.at(i, j);
                }
            }
        }
    });
}

NodeId exp_op(Tape & t, NodeId a) {
    Tensor out = t.value(a);
    for (float & v : out.data) {
        v = std::exp(v);
    }
    return t.record(std::move(out), {a}, [a](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & y = tp.value(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i] * y.data[i];
        }
    });
}

NodeId relu(Tape & t, NodeId a) {
    Tensor out = t.value(a);
    for (float & v : out.data) {
        v = v > 0.0f ? v : 0.0f;
    }
    return t.record(std::move(out), {a}, [a](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & y = tp.value(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) {
            if (y.data[i] > 0.0f) {
                ga.data[i] += g.data[i];
            }
        }
    });
}

NodeId tanh_op(Tape & t, NodeId a) {
    Tensor out = t.value(a);
    for (float & v : out.data) {
        v = std::tanh(v);
    }
    return t.record(std::move(out), {a}, [a](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & y = tp.value(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i] * (1.0f - y.data[i] * y.data[i]);
        }
    });
}

void softmax_inplace(std::vector<float> & v) {
    if (v.empty()) {
        throw shape_error("softmax: empty input");
    }
    float mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (float & x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (float & x : v) {
        x = (float) (x / sum);
    }
}

float entropy_nats(const std::vector<float> & probs) {
    double h = 0.0;
    for (float p : probs) {
        if (p > 0.0f) {
            h -= (double) p * std::log((double) p);
        }
    }
    return (float) h;
}

NodeId softmax_rows(Tape & t, NodeId a) {
    const Tensor & av = t.value(a);
    if (av.size() == 0) {
        throw shape_error("softmax: empty input");
    }
    const int m = av.rows(), n = av.cols();
    Tensor out = av;
    for (int i = 0; i < m; ++i) {
        float * row = out.data.data() + (size_t) i * n;
        float mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < n; ++j) {
            row[j] = (float) (row[j] / sum);
        }
    }
    return t.record(std::move(out), {a}, [a, m, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & y = tp.value(self);
        Tensor & ga = tp.grad(a);
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n; ++j) {
                dot += (double) g.at(i, j) * y.at(i, j);
            }
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += y.at(i, j) * (g.at(i, j) - (float) dot);
            }
        }
    });
}

NodeId log_softmax_rows(Tape & t, NodeId a) {
    const Tensor & av = t.value(a);
    if (av.size() == 0) {
        throw shape_error("log_softmax: empty input");
    }
    const int m = av.rows(), n = av.cols();
    Tensor out = av;
    for (int i = 0; i < m; ++i) {
        float * row = out.data.data() + (size_t) i * n;
        float mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            sum += std::exp((double) row[j] - mx);
        }
        const float lse = mx + (float) std::log(sum);
        for (int j = 0; j < n; ++j) {
            row[j] -= lse;
        }
    }
    return t.record(std::move(out), {a}, [a, m, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & y = tp.value(self); // log-probs
        Tensor & ga = tp.grad(a);
        for (int i = 0; i < m; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < n; ++j) {
                gsum += g.at(i, j);
            }
            for (int j = 0; j < n; ++j) {
                ga.at(i, j) += g.at(i, j) - (float) (gsum * std::exp((double) y.at(i, j)));
            }
        }
    });
}

NodeId layer_norm_rows(Tape & t, NodeId a, NodeId gain, NodeId bias, float eps) {
    const Tensor & av = t.value(a);
    const int m = av.rows(), n = av.cols();
    if (t.value(gain).size() != n || t.value(bias).size() != n) {
        throw shape_error("layer_norm: gain/bias width mismatch");
    }
    Tensor norm({m, n}); // (x - mean) / sigma, cached for backward via re-let
    Tensor out({m, n});
    std::vector<float> inv_sigma(m);
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) {
            mean += av.at(i, j);
        }
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = av.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        inv_sigma[i] = (float) (1.0 / std::sqrt(var + eps));
        for (int j = 0; j < n; ++j) {
            norm.at(i, j) = ((float) (av.at(i, j) - mean)) * inv_sigma[i];
            out.at(i, j) = norm.at(i, j) * t.value(gain).data[j] + t.value(bias).data[j];
        }
    }
    return t.record(std::move(out), {a, gain, bias},
                    [a, gain, bias, m, n, norm = std::move(norm), inv_sigma](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        const Tensor & gv = tp.value(gain);
        if (tp.requires_grad(gain)) {
            Tensor & gg = tp.grad(gain);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gg.data[j] += g.at(i, j) * norm.at(i, j);
                }
            }
        }
        if (tp.requires_grad(bias)) {
            Tensor & gb = tp.grad(bias);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gb.data[j] += g.at(i, j);
                }
            }
        }
        if (tp.requires_grad(a)) {
            Tensor & ga = tp.grad(a);
            for (int i = 0; i < m; ++i) {
                // dL/dnorm_j = g_j * gain_j; standard layer-norm backward
                double sum_d = 0.0, sum_dn = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double d = (double) g.at(i, j) * gv.data[j];
                    sum_d += d;
                    sum_dn += d * norm.at(i, j);
                }
                for (int j = 0; j < n; ++j) {
                    const double d = (double) g.at(i, j) * gv.data[j];
                    ga.at(i, j) += (float) (inv_sigma[i] * (d - sum_d / n - norm.at(i, j) * sum_dn / n));
                }
            }
        }
    });
}

NodeId gather_rows(Tape & t, NodeId table, const std::vector<int> & ids) {
    const Tensor & tv = t.value(table);
    const int n = tv.cols();
    Tensor out({(int) ids.size(), n});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows()) {
            throw shape_error("gather_rows: index out of range");
        }
        std::copy_n(tv.data.data() + (size_t) ids[i] * n, n, out.data.data() + i * n);
    }
    return t.record(std::move(out), {table}, [table, ids, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & gt = tp.grad(table);
        for (size_t i = 0; i < ids.size(); ++i) {
            for (int j = 0; j < n; ++j) {
                gt.data[(size_t) ids[i] * n + j] += g.data[i * (size_t) n + j];
            }
        }
    });
}

NodeId concat_rows(Tape & t, NodeId a, NodeId b) {
    const Tensor & av = t.value(a);
    const Tensor & bv = t.value(b);
    if (av.cols() != bv.cols()) {
        throw shape_error("concat_rows: width mismatch");
    }
    const int ma = av.rows(), mb = bv.rows(), n = av.cols();
    Tensor out({ma + mb, n});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
    return t.record(std::move(out), {a, b}, [a, b, ma, mb, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        if (tp.requires_grad(a)) {
            Tensor & ga = tp.grad(a);
            for (size_t i = 0; i < (size_t) ma * n; ++i) {
                ga.data[i] += g.data[i];
            }
        }
        if (tp.requires_grad(b)) {
            Tensor & gb = tp.grad(b);
            for (size_t i = 0; i < (size_t) mb * n; ++i) {
                gb.data[i] += g.data[(size_t) ma * n + i];
            }
        }
    });
}

NodeId slice_rows(Tape & t, NodeId a, int start, int len) {
    const Tensor & av = t.value(a);
    const int n = av.cols();
    if (start < 0 || len < 0 || start + len > av.rows()) {
        throw shape_error("slice_rows: range out of bounds");
    }
    Tensor out({len, n});
    std::copy_n(av.data.data() + (size_t) start * n, (size_t) len * n, out.data.data());
    return t.record(std::move(out), {a}, [a, start, len, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < (size_t) len * n; ++i) {
            ga.data[(size_t) start * n + i] += g.data[i];
        }
    });
}

NodeId sum(Tape & t, NodeId a) {
    double s = 0.0;
    for (float v : t.value(a).data) {
        s += v;
    }
    return t.record(Tensor::scalar((float) s), {a}, [a](Tape & tp, NodeId self) {
        const float g = tp.grad(self).data[0];
        Tensor & ga = tp.grad(a);
        for (float & v : ga.data) {
            v += g;
        }
    });
}

NodeId weighted_sum(Tape & t, NodeId a, Tensor weights) {
    const Tensor & av = t.value(a);
    check_same_shape(av, weights, "weighted_sum");
    double s = 0.0;
    for (size_t i = 0; i < av.data.size(); ++i) {
        s += (double) av.data[i] * weights.data[i];
    }
    return t.record(Tensor::scalar((float) s), {a}, [a, w = std::move(weights)](Tape & tp, NodeId self) {
        const float g = tp.grad(self).data[0];
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < ga.data.size(); ++i) {
            ga.data[i] += g * w.data[i];
        }
    });
}

NodeId add_const(Tape & t, NodeId a, Tensor c) {
    const Tensor & av = t.value(a);
    check_same_shape(av, c, "add_const");
    Tensor out = av;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += c.data[i];
    }
    return t.record(std::move(out), {a}, [a](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
        }
    });
}

NodeId pick(Tape & t, NodeId a, const std::vector<int> & cols) {
    const Tensor & av = t.value(a);
    const int m = av.rows(), n = av.cols();
    if ((int) cols.size() != m) {
        throw shape_error("pick: one column index per row required");
    }
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        if (cols[i] < 0 || cols[i] >= n) {
            throw shape_error("pick: column out of range");
        }
        out.data[i] = av.at(i, cols[i]);
    }
    return t.record(std::move(out), {a}, [a, cols, n](Tape & tp, NodeId self) {
        const Tensor & g = tp.grad(self);
        Tensor & ga = tp.grad(a);
        for (size_t i = 0; i < cols.size(); ++i) {
            ga.data[i * (size_t) n + cols[i]] += g.data[i];
        }
    });
}

} // namespace ops
} // namespace skrl
