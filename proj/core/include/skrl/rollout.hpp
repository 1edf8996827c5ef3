#pragma once

#include "skrl/reward.hpp"
#include "skrl/taskgen.hpp"

#include <vector>

namespace skrl {

// one sampled response with the per-step bookkeeping RL needs
struct Rollout {
    std::vector<int> prompt;      // BOS + question tokens
    std::vector<int> tokens;      // generated tokens, EOS included when emitted
    std::vector<float> logprobs;  // log-prob of each sampled token, post-ban renormalized
    std::vector<float> entropies; // full-distribution entropy (nats) at each step, pre-ban
    RewardBreakdown reward;
};

struct RolloutGroup {
    size_t prompt_index = 0; // into the episode's prompt list
    std::vector<Rollout> rollouts;
    std::vector<float> advantages; // one value per rollout, broadcast over its tokens
    bool kept = true;
};

} // namespace skrl
