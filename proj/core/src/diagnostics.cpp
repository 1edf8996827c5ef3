#include "skrl/diagnostics.hpp"

#include "skrl/params.hpp"
#include "skrl/tensor.hpp"
#include "skrl/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace skrl {

float token_entropy(const std::vector<float> & logits) {
    if (logits.empty()) {
        throw contract_error("token_entropy: empty logits");
    }
    float mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (float l : logits) {
        z += std::exp((double) l - mx);
    }
    double h = 0.0;
    for (float l : logits) {
        double p = std::exp((double) l - mx) / z;
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return (float) h;
}

std::optional<double> critical_token_entropy(const std::vector<Rollout> & rollouts,
                                             const std::set<int> & lexicon,
                                             CriticalPositionRule rule) {
    if (lexicon.empty()) {
        throw config_error("critical_token_entropy: empty critical lexicon");
    }
    double sum = 0.0;
    int64_t n = 0;
    for (const auto & r : rollouts) {
        for (size_t t = 0; t < r.tokens.size(); ++t) {
            bool critical = false;
            if (rule == CriticalPositionRule::token_in_lexicon) {
                critical = lexicon.count(r.tokens[t]) > 0;
            } else {
                critical = t > 0 && r.tokens[t - 1] == tok::THINK_OPEN;
            }
            if (critical && t < r.entropies.size()) {
                sum += r.entropies[t];
                n++;
            }
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return sum / (double) n;
}

std::optional<double> high_entropy_tail(const std::vector<float> & entropies, double tau) {
    if (tau < 0.0) {
        throw contract_error("high_entropy_tail: tau must be >= 0");
    }
    if (entropies.empty()) {
        return std::nullopt;
    }
    int64_t n = 0;
    for (float h : entropies) {
        if (h > tau) {
            n++;
        }
    }
    return (double) n / (double) entropies.size();
}

// ranks with ties averaged, 1-based
static std::vector<double> average_ranks(const std::vector<double> & v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) {
            j++;
        }
        double r = 0.5 * ((double) (i + 1) + (double) (j + 1));
        for (size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

static double pearson(const std::vector<double> & x, const std::vector<double> & y) {
    const size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

CheckpointRanking rank_checkpoints(std::vector<CheckpointRanking::Entry> entries) {
    if (entries.size() < 2) {
        throw contract_error("rank_checkpoints: need at least 2 entries");
    }
    std::vector<double> ent, acc;
    for (const auto & e : entries) {
        ent.push_back(e.critical_entropy);
        acc.push_back(e.validation_accuracy);
    }
    CheckpointRanking out;
    out.spearman = pearson(average_ranks(ent), average_ranks(acc));
    out.pearson = pearson(ent, acc);
    std::stable_sort(entries.begin(), entries.end(), [](const auto & a, const auto & b) {
        return a.critical_entropy > b.critical_entropy;
    });
    out.entries = std::move(entries);
    return out;
}

std::vector<HistogramBin> entropy_histogram(const std::vector<float> & entropies, int n_bins,
                                            double lo, double hi) {
    if (n_bins <= 0 || !(hi > lo)) {
        throw contract_error("entropy_histogram: need n_bins > 0 and hi > lo");
    }
    std::vector<HistogramBin> bins(n_bins);
    const double w = (hi - lo) / n_bins;
    for (int i = 0; i < n_bins; ++i) {
        bins[i].left = lo + i * w;
        bins[i].right = lo + (i + 1) * w;
    }
    for (float h : entropies) {
        int i = (int) std::floor(((double) h - lo) / w);
        i = std::clamp(i, 0, n_bins - 1);
        bins[i].count++;
    }
    return bins;
}

std::string histogram_csv(const std::vector<HistogramBin> & bins) {
    std::ostringstream os;
    os << "bin_left,bin_right,count\n";
    for (const auto & b : bins) {
        os << b.left << "," << b.right << "," << b.count << "\n";
    }
    return os.str();
}

} // namespace skrl
