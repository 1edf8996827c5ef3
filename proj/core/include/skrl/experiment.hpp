#pragma once

#include "skrl/checkpoint.hpp"
#include "skrl/config.hpp"
#include "skrl/decode.hpp"

#include <string>
#include <vector>

namespace skrl {

struct EvalResult {
    double mean = 0.0;
    double stddev = 0.0; // population std over seeds
    std::vector<double> per_seed;
};

// mean accuracy reward over the dataset for each seed, then mean +- std
EvalResult eval_accuracy(const Policy & policy, const std::vector<TaskInstance> & dataset,
                         const DecodeMode & mode, const std::vector<uint64_t> & seeds,
                         int workers = 1);

struct StageReport {
    StageKind kind;
    bool ok = false;
    std::string error;
    std::vector<std::string> artifacts; // files written by this stage
};

struct ExperimentReport {
    bool ok = false;
    std::vector<StageReport> stages;
};

// runs cfg.plan sequentially in cfg.out_dir. Every stage appends to
// metrics.jsonl and saves its checkpoint atomically; a stage failure stops
// the plan but keeps everything written so far.
ExperimentReport run_experiment(const ExperimentConfig & cfg);

} // namespace skrl
