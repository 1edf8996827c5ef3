#include "skrl/experiment.hpp"

#include "skrl/rl.hpp"
#include "skrl/sft.hpp"

#include <filesystem>
#include <fstream>

namespace skrl {

namespace fs = std::filesystem;

EvalResult eval_accuracy(const Policy & policy, const std::vector<TaskInstance> & dataset,
                         const DecodeMode & mode, const std::vector<uint64_t> & seeds,
                         int workers) {
    if (dataset.empty()) {
        throw contract_error("eval_accuracy: empty dataset");
    }
    if (seeds.empty()) {
        throw contract_error("eval_accuracy: no seeds");
    }
    auto rows = eval_modes(policy, dataset, {mode}, seeds, 0.8f, workers);
    EvalResult out;
    for (const auto & r : rows) {
        out.per_seed.push_back(r.accuracy);
        out.mean += r.accuracy;
    }
    out.mean /= (double) out.per_seed.size();
    double var = 0.0;
    for (double v : out.per_seed) {
        var += (v - out.mean) * (v - out.mean);
    }
    out.stddev = std::sqrt(var / (double) out.per_seed.size());
    return out;
}

namespace {

struct run_state {
    ExperimentConfig cfg;
    Policy policy;
    MetricsLogger log;
    std::string out;

    explicit run_state(const ExperimentConfig & c)
        : cfg(c), policy(c.policy), log((fs::path(c.out_dir) / "metrics.jsonl").string(),
                                        c.deterministic) {
        out = c.out_dir;
        if (cfg.deterministic) {
            cfg.workers = 1;
            cfg.rl.workers = 1;
            cfg.sft.workers = 1;
        }
        policy.init_params(cfg.seed);
        if (!cfg.init_checkpoint.empty()) {
            load_checkpoint_into(policy.params(), cfg.init_checkpoint);
        }
        for (const std::string & cmd : cfg.verifier_commands) {
            cfg.rl.extra_verifiers.push_back(std::make_shared<ExternalVerifier>(cmd));
        }
    }

    std::string artifact(const std::string & name) const {
        return (fs::path(out) / name).string();
    }

    std::vector<uint64_t> eval_seed_list() const {
        std::vector<uint64_t> seeds;
        for (int i = 0; i < cfg.eval_seeds; ++i) {
            seeds.push_back(cfg.seed + (uint64_t) i);
        }
        return seeds;
    }

    std::vector<TaskInstance> dataset(const DatasetSpec & spec) const {
        return gen_dataset(spec.seed, spec.size, spec.mix, spec.domain, cfg.rl.taskgen);
    }
};

void write_text(const std::string & path, const std::string & text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw config_error("cannot write " + path);
    }
    f << text;
}

void stage_cold_start(run_state & st, StageReport & rep, const std::string & tag) {
    auto insts = gen_dataset(st.cfg.train_dataset.seed, st.cfg.sft_dataset_size,
                             st.cfg.train_dataset.mix, st.cfg.train_dataset.domain,
                             st.cfg.rl.taskgen);
    auto ds = teacher_dataset(insts, st.cfg.seed, st.cfg.rl.taskgen);
    SFTReport r = cold_start(st.policy, ds, st.cfg.sft, st.cfg.seed);
    for (MetricsRecord rec : r.history) {
        rec.stage = tag;
        st.log.log(rec);
    }
    std::string ckpt = st.artifact(tag + ".ckpt");
    save_checkpoint(st.policy.params(), ckpt);
    rep.artifacts = {ckpt, st.log.path()};
}

void stage_rl(run_state & st, StageReport & rep, const std::string & tag) {
    ReferencePolicy reference(st.policy);
    std::string ckpt = st.artifact(tag + ".ckpt");
    for (int ep = 0; ep < st.cfg.rl_episodes; ++ep) {
        EpisodeResult r = run_episode(st.policy, reference, st.cfg.rl, ep, st.cfg.seed);
        r.metrics.stage = tag;
        st.log.log(r.metrics);
        if ((ep + 1) % 50 == 0) {
            save_checkpoint(st.policy.params(), ckpt);
        }
    }
    save_checkpoint(st.policy.params(), ckpt);
    rep.artifacts = {ckpt, st.log.path()};
}

void stage_connector_tune(run_state & st, StageReport & rep, const std::string & tag) {
    auto math_ds = st.dataset(st.cfg.eval_dataset);
    auto contrast_ds = st.dataset(st.cfg.contrast_dataset);
    auto seeds = st.eval_seed_list();
    EvalResult math_before = eval_accuracy(st.policy, math_ds, DecodeMode::slow(), seeds,
                                           st.cfg.workers);
    EvalResult contrast_before = eval_accuracy(st.policy, contrast_ds, DecodeMode::slow(), seeds,
                                               st.cfg.workers);

    auto insts = gen_dataset(st.cfg.contrast_dataset.seed, st.cfg.sft_dataset_size,
                             st.cfg.contrast_dataset.mix, st.cfg.contrast_dataset.domain,
                             st.cfg.rl.taskgen);
    auto ds = teacher_dataset(insts, st.cfg.seed, st.cfg.rl.taskgen);
    SFTReport r = connector_only_tune(st.policy, ds, st.cfg.sft, st.cfg.seed);
    for (MetricsRecord rec : r.history) {
        rec.stage = tag;
        st.log.log(rec);
    }

    EvalResult math_after = eval_accuracy(st.policy, math_ds, DecodeMode::slow(), seeds,
                                          st.cfg.workers);
    EvalResult contrast_after = eval_accuracy(st.policy, contrast_ds, DecodeMode::slow(), seeds,
                                              st.cfg.workers);
    MetricsRecord rec;
    rec.stage = tag;
    rec.index = r.epochs_run;
    rec.extra["math_before"] = math_before.mean;
    rec.extra["math_after"] = math_after.mean;
    rec.extra["contrast_before"] = contrast_before.mean;
    rec.extra["contrast_after"] = contrast_after.mean;
    st.log.log(rec);

    std::string ckpt = st.artifact(tag + ".ckpt");
    save_checkpoint(st.policy.params(), ckpt);
    rep.artifacts = {ckpt, st.log.path()};
}

void stage_eval(run_state & st, StageReport & rep, const std::string & tag) {
    auto ds = st.dataset(st.cfg.eval_dataset);
    auto seeds = st.eval_seed_list();
    EvalResult r = eval_accuracy(st.policy, ds, DecodeMode::slow(), seeds, st.cfg.workers);
    MetricsRecord rec;
    rec.stage = tag;
    rec.mean_accuracy = r.mean;
    rec.extra["accuracy_std"] = r.stddev;
    for (size_t i = 0; i < r.per_seed.size(); ++i) {
        rec.extra["seed_" + std::to_string(seeds[i])] = r.per_seed[i];
    }
    st.log.log(rec);
    rep.artifacts = {st.log.path()};
}

std::vector<DecodeMode> named_modes(const ExperimentConfig & cfg) {
    std::vector<DecodeMode> modes;
    for (const std::string & name : cfg.modes) {
        switch (decode_mode_from_name(name)) {
            case DecodeModeKind::Slow:    modes.push_back(DecodeMode::slow()); break;
            case DecodeModeKind::NoThink: modes.push_back(DecodeMode::nothink()); break;
            case DecodeModeKind::NoWait:  modes.push_back(DecodeMode::nowait()); break;
            case DecodeModeKind::Budget:
                for (int b : cfg.budgets) {
                    modes.push_back(DecodeMode::with_budget(b));
                }
                break;
        }
    }
    return modes;
}

void stage_modes_sweep(run_state & st, StageReport & rep, const std::string & tag) {
    auto ds = st.dataset(st.cfg.eval_dataset);
    auto rows = eval_modes(st.policy, ds, named_modes(st.cfg), st.eval_seed_list(),
                           st.cfg.reward_mix_accuracy, st.cfg.workers);
    std::string path = st.artifact(tag + ".csv");
    write_text(path, modes_csv(rows));
    for (const auto & s : summarize_modes(rows)) {
        MetricsRecord rec;
        rec.stage = tag;
        rec.index = s.budget;
        rec.mean_accuracy = s.accuracy;
        rec.extra["mean_length"] = s.mean_length;
        rec.extra["is_" + s.mode] = 1.0;
        st.log.log(rec);
    }
    rep.artifacts = {path, st.log.path()};
}

void stage_budget_sweep(run_state & st, StageReport & rep, const std::string & tag) {
    std::vector<DecodeMode> modes;
    for (int b : st.cfg.budgets) {
        modes.push_back(DecodeMode::with_budget(b));
    }
    modes.push_back(DecodeMode::slow()); // unlimited baseline
    auto ds = st.dataset(st.cfg.eval_dataset);
    auto rows = eval_modes(st.policy, ds, modes, st.eval_seed_list(),
                           st.cfg.reward_mix_accuracy, st.cfg.workers);
    std::string path = st.artifact(tag + ".csv");
    write_text(path, modes_csv(rows));
    rep.artifacts = {path, st.log.path()};
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig & cfg) {
    fs::create_directories(cfg.out_dir);
    run_state st(cfg);
    write_text(st.artifact("config.json"), config_to_json(cfg));

    ExperimentReport report;
    for (size_t i = 0; i < st.cfg.plan.size(); ++i) {
        StageKind kind = st.cfg.plan[i];
        StageReport rep;
        rep.kind = kind;
        // numbered so a repeated stage gets its own artifacts
        std::string tag = std::to_string(i) + "_" + stage_name(kind);
        try {
            switch (kind) {
                case StageKind::cold_start:     stage_cold_start(st, rep, tag); break;
                case StageKind::rl:             stage_rl(st, rep, tag); break;
                case StageKind::connector_tune: stage_connector_tune(st, rep, tag); break;
                case StageKind::eval:           stage_eval(st, rep, tag); break;
                case StageKind::modes_sweep:    stage_modes_sweep(st, rep, tag); break;
                case StageKind::budget_sweep:   stage_budget_sweep(st, rep, tag); break;
            }
            rep.ok = true;
        } catch (const std::exception & e) {
            rep.ok = false;
            rep.error = e.what();
            report.stages.push_back(rep);
            report.ok = false;
            return report;
        }
        report.stages.push_back(rep);
    }
    report.ok = true;
    return report;
}

} // namespace skrl
