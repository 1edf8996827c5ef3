#pragma once

#include "skrl/policy.hpp"

#include <limits>
#include <set>
#include <string>
#include <vector>

namespace skrl {

enum class DecodeModeKind { Slow, NoThink, NoWait, Budget };

// Budget(B) with this value never binds: token-identical to Slow
inline constexpr int BUDGET_UNLIMITED = std::numeric_limits<int>::max();

struct DecodeMode {
    DecodeModeKind kind = DecodeModeKind::Slow;
    float temperature = 1.0f;
    std::set<int> banned = Vocab::default_critical_lexicon(); // applied by NoWait
    int budget = BUDGET_UNLIMITED; // max tokens inside the think block

    static DecodeMode slow(float temp = 1.0f) { return {DecodeModeKind::Slow, temp}; }
    static DecodeMode nothink(float temp = 1.0f) { return {DecodeModeKind::NoThink, temp}; }
    static DecodeMode nowait(float temp = 1.0f) { return {DecodeModeKind::NoWait, temp}; }
    static DecodeMode with_budget(int b, float temp = 1.0f) {
        DecodeMode m{DecodeModeKind::Budget, temp};
        m.budget = b;
        return m;
    }
};

const char * decode_mode_name(DecodeModeKind k);
DecodeModeKind decode_mode_from_name(const std::string & s);

struct DecodeResult {
    std::vector<int> tokens;
    std::vector<float> entropies; // pre-ban, nats
    int think_len = 0;            // tokens strictly inside THINK_OPEN..THINK_CLOSE
    int total_len = 0;
    RewardBreakdown reward;
};

DecodeResult decode(const Policy & policy, const TaskInstance & inst, const DecodeMode & mode,
                    uint64_t seed, float reward_mix = 0.8f);

struct ModeEvalRow {
    std::string mode;
    int budget = 0; // 0 for non-budget modes
    uint64_t seed = 0;
    double accuracy = 0.0;
    double mean_length = 0.0;
};

// one row per (mode, seed); accuracy is the mean accuracy reward over the
// dataset, length the mean generated-token count
std::vector<ModeEvalRow> eval_modes(const Policy & policy, const std::vector<TaskInstance> & dataset,
                                    const std::vector<DecodeMode> & modes,
                                    const std::vector<uint64_t> & seeds, float reward_mix = 0.8f,
                                    int workers = 1);

// header: mode,budget,seed,accuracy,mean_length
std::string modes_csv(const std::vector<ModeEvalRow> & rows);

// mean over seeds for one mode label+budget
struct ModeSummary {
    std::string mode;
    int budget = 0;
    double accuracy = 0.0;
    double mean_length = 0.0;
};
std::vector<ModeSummary> summarize_modes(const std::vector<ModeEvalRow> & rows);

} // namespace skrl
