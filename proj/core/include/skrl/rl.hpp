#pragma once

#include "skrl/metrics.hpp"
#include "skrl/policy.hpp"
#include "skrl/rollout.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace skrl {

struct empty_batch_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CurriculumStage {
    int start_episode = 0;
    TierMix mix;
};

struct RLConfig {
    int rollouts_per_episode = 128;
    int group_size = 8;              // samples per prompt (M)
    int grad_steps_per_episode = 1;  // optimizer updates; the kept batch is split across them
    float clip_low = 0.2f;
    float clip_high = 0.2f;          // 0.28 for the clip-higher variant
    float kl_beta = 0.0f;
    OptimizerConfig optimizer;       // sgd with momentum by default
    bool dynamic_sampling = false;
    int max_refills = 4;
    std::vector<CurriculumStage> curriculum = {{0, {1.0f, 0.0f}}};
    float temperature = 1.0f;
    float reward_mix = 0.8f;
    std::vector<std::shared_ptr<VerifierClient>> extra_verifiers;
    // replaceable scorer; null means the combined verifier reward
    std::function<RewardBreakdown(const std::vector<int> &, const TaskInstance &)> reward_fn;
    Domain domain = Domain::math;
    TaskGenConfig taskgen;
    int workers = 1;
    std::set<int> critical_lexicon = Vocab::default_critical_lexicon();
    double tail_tau = -1.0;          // < 0: use 0.8 * ln(vocab size)
    int max_new_tokens = -1;         // rollout length cap; -1 = model maximum
    int long_rollout_episode = -1;   // episode at which the cap switches
    int long_max_new_tokens = -1;

    int n_prompts() const { return rollouts_per_episode / group_size; }
};

// pi_ref is frozen at RL start (KL anchor); pi_old is re-snapshot once per
// episode before rollout generation and is the ratio denominator
class ReferencePolicy {
  public:
    explicit ReferencePolicy(const Policy & p) : ref_(p) {}

    const Policy & ref() const { return ref_; }
    void refresh_old(const Policy & p) { old_ = p; }
    const Policy & old_policy() const {
        if (!old_) {
            throw contract_error("ReferencePolicy: pi_old not snapshot yet");
        }
        return *old_;
    }

  private:
    Policy ref_;
    std::optional<Policy> old_;
};

// (r_j - mean) / max(std, delta), population std; kept=false when std < delta
std::pair<std::vector<float>, bool> group_advantages(const std::vector<float> & rewards,
                                                     float delta = 1e-6f);

// min(rho*A, clip(rho, 1-clip_low, 1+clip_high)*A)
float clipped_term(float rho, float adv, float clip_low, float clip_high);

float kl_term(float logp_theta, float logp_ref);

// marks zero-variance groups kept=false; returns how many replacements are
// needed to refill the episode
int dynamic_sample_filter(std::vector<RolloutGroup> & groups);

TierMix curriculum_schedule(int episode, const RLConfig & cfg);

struct GrpoLossStats {
    float loss = 0.0f;
    std::vector<float> ratios; // every token's importance ratio, traversal order
    int n_tokens = 0;
};

// accumulates gradients into policy.params(); caller zeroes grads and steps.
// ratios use each rollout's stored behavior log-probs (pi_old); reference
// supplies pi_ref log-probs for the KL term when beta > 0
GrpoLossStats grpo_loss(Policy & policy, const std::vector<TaskInstance> & prompts,
                        const std::vector<RolloutGroup> & groups,
                        const ReferencePolicy * reference, const RLConfig & cfg);

struct EpisodeResult {
    MetricsRecord metrics;
    std::vector<TaskInstance> prompts;
    std::vector<RolloutGroup> groups;
};

EpisodeResult run_episode(Policy & policy, ReferencePolicy & reference, const RLConfig & cfg,
                          int episode, uint64_t seed);

} // namespace skrl
