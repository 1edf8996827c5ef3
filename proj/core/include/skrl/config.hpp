#pragma once

#include "skrl/diagnostics.hpp"
#include "skrl/rl.hpp"
#include "skrl/sft.hpp"

#include <string>
#include <vector>

namespace skrl {

enum class StageKind { cold_start, rl, connector_tune, eval, modes_sweep, budget_sweep };

const char * stage_name(StageKind k);
StageKind stage_from_name(const std::string & s);

struct DatasetSpec {
    uint64_t seed = 1;
    int size = 256;
    TierMix mix = {1.0, 0.0};
    Domain domain = Domain::math;
};

struct DiagnosticsConfig {
    std::set<int> critical_lexicon = Vocab::default_critical_lexicon();
    double tail_tau = -1.0; // < 0: 0.8 * ln(vocab size)
    bool after_think_open = false;
};

// the full scientific record of one run; strict JSON, unknown keys rejected
struct ExperimentConfig {
    uint64_t seed = 1;
    std::string out_dir = "out";
    std::string init_checkpoint; // loaded before the first stage when set
    int workers = 1;
    bool deterministic = false;

    PolicyConfig policy;
    RLConfig rl;
    int rl_episodes = 200;
    SFTConfig sft;
    int sft_dataset_size = 512;

    float reward_mix_accuracy = 0.8f;
    std::vector<std::string> verifier_commands; // external line-JSON verifiers

    DiagnosticsConfig diag;

    std::vector<std::string> modes = {"slow", "nothink", "nowait"};
    std::vector<int> budgets = {0, 2, 4, 8, 16};
    int eval_seeds = 5;

    DatasetSpec train_dataset;
    DatasetSpec eval_dataset = {999, 64, {1.0, 0.0}, Domain::math};
    DatasetSpec contrast_dataset = {777, 64, {1.0, 0.0}, Domain::countB};

    std::vector<StageKind> plan;
};

// origin names the source in error messages (file path or "<string>")
ExperimentConfig parse_config(const std::string & text, const std::string & origin = "<string>");
ExperimentConfig load_config(const std::string & path);

std::string config_to_json(const ExperimentConfig & cfg);

} // namespace skrl
