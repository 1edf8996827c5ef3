#pragma once

#include "skrl/rollout.hpp"

#include <cmath>
#include <cstdint>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace skrl {

// H = -sum p log p over softmax(logits), natural log
float token_entropy(const std::vector<float> & logits);

// mean of stored step entropies at positions whose realized token is in the
// lexicon; "step after THINK_OPEN" is the configurable variant
enum class CriticalPositionRule {
    token_in_lexicon,  // default: the step emitted a lexicon token
    after_think_open,  // the step immediately following THINK_OPEN
};

std::optional<double> critical_token_entropy(const std::vector<Rollout> & rollouts,
                                             const std::set<int> & lexicon,
                                             CriticalPositionRule rule = CriticalPositionRule::token_in_lexicon);

// fraction of steps with H > tau; empty input -> absent
std::optional<double> high_entropy_tail(const std::vector<float> & entropies, double tau);

struct CheckpointRanking {
    struct Entry {
        std::string id;
        double critical_entropy = 0.0;
        double validation_accuracy = 0.0;
    };
    std::vector<Entry> entries; // sorted by critical entropy, descending
    double spearman = 0.0;
    double pearson = 0.0;
};

CheckpointRanking rank_checkpoints(std::vector<CheckpointRanking::Entry> entries);

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    int64_t count = 0;
};

std::vector<HistogramBin> entropy_histogram(const std::vector<float> & entropies, int n_bins,
                                            double lo, double hi);
// CSV: header bin_left,bin_right,count
std::string histogram_csv(const std::vector<HistogramBin> & bins);

// the paper-scale high-entropy threshold mapped onto a vocabulary of size V
inline double default_tail_threshold(int vocab_size) {
    return 0.8 * std::log((double) vocab_size);
}

} // namespace skrl
