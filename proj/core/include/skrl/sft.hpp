#pragma once

#include "skrl/metrics.hpp"
#include "skrl/policy.hpp"

#include <set>
#include <string>
#include <vector>

namespace skrl {

struct SFTExample {
    TaskInstance inst;
    std::vector<int> target; // response tokens, teacher-forced
};

struct SFTConfig {
    int batch_size = 64;
    OptimizerConfig optimizer;       // base learning rate lives here
    float warmup_ratio = 0.03f;      // fraction of total steps
    int epochs = 2;
    int max_seq_len = 64;
    std::set<std::string> frozen_labels;
    int patience = 3;                // validation checks without improvement
    float val_fraction = 0.1f;
    float format_target = 0.95f;     // cold-start convergence bar (greedy decodes)
    int workers = 1;
};

// scheduled learning rate for one global step: linear warmup to the base
// rate, then cosine decay to 0
float cosine_lr(int step, int total_steps, float warmup_ratio, float base_lr);

// mean per-token negative log-likelihood of the targets under teacher
// forcing; PAD and prompt positions are masked out. Accumulates gradients
// and applies one optimizer update at the given scheduled rate.
float sft_step(Policy & policy, const std::vector<SFTExample> & batch, const SFTConfig & cfg,
               float lr);

// loss only, no update (validation)
float sft_loss(Policy & policy, const std::vector<SFTExample> & batch);

struct SFTReport {
    bool converged = false;
    int epochs_run = 0;
    double best_val_loss = 0.0;
    double final_format_mean = 0.0; // greedy format reward on the held-out split
    std::vector<MetricsRecord> history;
};

// cold-start finetuning on teacher traces; early-stops on validation loss and
// restores the best parameters. Non-convergence is a report, not a crash.
SFTReport cold_start(Policy & policy, const std::vector<SFTExample> & dataset,
                     const SFTConfig & cfg, uint64_t seed);

// same loop with {encoder, decoder} forcibly frozen; connector frozen or
// trainable-all masks are rejected
SFTReport connector_only_tune(Policy & policy, const std::vector<SFTExample> & dataset,
                              const SFTConfig & cfg, uint64_t seed);

// teacher-trace dataset for a list of instances
std::vector<SFTExample> teacher_dataset(const std::vector<TaskInstance> & instances, uint64_t seed,
                                        const TaskGenConfig & cfg = {});

// greedy decodes of a (typically post-RL) policy, filtered to correct
// answers: the distilled SFT comparison arm
std::vector<SFTExample> distill_dataset(const Policy & policy,
                                        const std::vector<TaskInstance> & instances);

} // namespace skrl
