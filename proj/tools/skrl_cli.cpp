#include "skrl/experiment.hpp"
#include "skrl/rl.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace skrl;

namespace {

struct shared_flags {
    std::string config_path;
    std::string out_dir;
    std::string init_checkpoint;
    uint64_t seed = 0;
    int workers = 0;
    bool deterministic = false;
    bool seed_set = false;
    bool out_set = false;
    bool workers_set = false;
};

void add_shared(CLI::App * cmd, shared_flags & fl) {
    cmd->add_option("--config", fl.config_path, "experiment config (strict JSON)");
    cmd->add_option("--seed", fl.seed, "master seed")->each([&](const std::string &) {
        fl.seed_set = true;
    });
    cmd->add_option("--out", fl.out_dir, "output directory")->each([&](const std::string &) {
        fl.out_set = true;
    });
    cmd->add_option("--workers", fl.workers, "rollout/eval worker threads")
        ->each([&](const std::string &) { fl.workers_set = true; });
    cmd->add_flag("--deterministic", fl.deterministic,
                  "single-threaded, byte-reproducible artifacts");
    cmd->add_option("--init", fl.init_checkpoint, "checkpoint to start from");
}

ExperimentConfig build_config(const shared_flags & fl) {
    ExperimentConfig cfg = fl.config_path.empty() ? ExperimentConfig{}
                                                  : load_config(fl.config_path);
    if (fl.seed_set) {
        cfg.seed = fl.seed;
    }
    if (fl.out_set) {
        cfg.out_dir = fl.out_dir;
    }
    if (const char * env = std::getenv("SKRL_OUT")) {
        cfg.out_dir = env;
    }
    if (fl.workers_set) {
        cfg.workers = fl.workers;
    }
    if (fl.deterministic) {
        cfg.deterministic = true;
    }
    if (cfg.deterministic) {
        cfg.workers = 1;
    }
    cfg.rl.workers = cfg.workers;
    cfg.sft.workers = cfg.workers;
    if (!fl.init_checkpoint.empty()) {
        cfg.init_checkpoint = fl.init_checkpoint;
    }
    return cfg;
}

int run_plan(const shared_flags & fl, std::vector<StageKind> plan) {
    ExperimentConfig cfg = build_config(fl);
    if (!plan.empty()) {
        cfg.plan = std::move(plan);
    }
    ExperimentReport rep = run_experiment(cfg);
    for (const auto & s : rep.stages) {
        std::cout << stage_name(s.kind) << (s.ok ? " ok" : " FAILED") << "\n";
        if (!s.ok) {
            std::cerr << "error: " << s.error << "\n";
        }
        for (const auto & a : s.artifacts) {
            std::cout << "  " << a << "\n";
        }
    }
    return rep.ok ? 0 : 1;
}

int run_gen_data(const shared_flags & fl) {
    ExperimentConfig cfg = build_config(fl);
    std::filesystem::create_directories(cfg.out_dir);
    auto ds = gen_dataset(cfg.train_dataset.seed, cfg.train_dataset.size, cfg.train_dataset.mix,
                          cfg.train_dataset.domain, cfg.rl.taskgen);
    std::string path = (std::filesystem::path(cfg.out_dir) / "dataset.jsonl").string();
    export_dataset(ds, path);
    std::cout << path << " (" << ds.size() << " instances)\n";
    return 0;
}

int run_diag(const shared_flags & fl) {
    ExperimentConfig cfg = build_config(fl);
    std::filesystem::create_directories(cfg.out_dir);
    Policy policy(cfg.policy);
    policy.init_params(cfg.seed);
    if (!cfg.init_checkpoint.empty()) {
        load_checkpoint_into(policy.params(), cfg.init_checkpoint);
    }
    auto ds = gen_dataset(cfg.eval_dataset.seed, cfg.eval_dataset.size, cfg.eval_dataset.mix,
                          cfg.eval_dataset.domain, cfg.rl.taskgen);

    std::vector<Rollout> rollouts;
    std::vector<float> entropies;
    Rng stream = Rng(cfg.seed).split(0xd1a6);
    for (size_t i = 0; i < ds.size(); ++i) {
        DecodeResult r = decode(policy, ds[i], DecodeMode::slow(), stream.split(i).next_u64(),
                                cfg.reward_mix_accuracy);
        Rollout roll;
        roll.tokens = r.tokens;
        roll.entropies = r.entropies;
        roll.reward = r.reward;
        rollouts.push_back(std::move(roll));
        entropies.insert(entropies.end(), r.entropies.begin(), r.entropies.end());
    }

    const double tau = cfg.diag.tail_tau >= 0
                           ? cfg.diag.tail_tau
                           : default_tail_threshold(cfg.policy.vocab_size);
    auto rule = cfg.diag.after_think_open ? CriticalPositionRule::after_think_open
                                          : CriticalPositionRule::token_in_lexicon;
    auto crit = critical_token_entropy(rollouts, cfg.diag.critical_lexicon, rule);
    auto tail = high_entropy_tail(entropies, tau);

    std::string hist_path = (std::filesystem::path(cfg.out_dir) / "entropy_histogram.csv").string();
    auto bins = entropy_histogram(entropies, 32, 0.0, std::log((double) cfg.policy.vocab_size));
    std::ofstream(hist_path) << histogram_csv(bins);

    std::cout << "steps: " << entropies.size() << "\n";
    std::cout << "critical_entropy: ";
    if (crit) {
        std::cout << *crit << "\n";
    } else {
        std::cout << "n/a (no critical positions)\n";
    }
    std::cout << "tail_prob(tau=" << tau << "): " << (tail ? std::to_string(*tail) : "n/a") << "\n";
    std::cout << hist_path << "\n";
    return 0;
}

int run_show_checkpoint(const std::string & path) {
    ParamStore ps = load_checkpoint(path);
    std::cout << checkpoint_summary(ps);
    int64_t total = 0;
    for (const auto & p : ps.all()) {
        total += (int64_t) p.value.data.size();
    }
    std::cout << "total parameters: " << total << "\n";
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"desk-scale encoder-connector-decoder RL training harness"};
    app.require_subcommand(1);

    shared_flags fl;
    std::string ckpt_path;

    CLI::App * gen = app.add_subcommand("gen-data", "export a task dataset as JSONL");
    CLI::App * cold = app.add_subcommand("cold-start", "supervised warmup on teacher traces");
    CLI::App * rl = app.add_subcommand("rl", "policy-gradient training with verifier rewards");
    CLI::App * tune = app.add_subcommand("tune-connector", "connector-only finetuning");
    CLI::App * eval = app.add_subcommand("eval", "multi-seed accuracy evaluation");
    CLI::App * modes = app.add_subcommand("modes", "decode-mode comparison table");
    CLI::App * budget = app.add_subcommand("budget-sweep", "accuracy/length vs think budget");
    CLI::App * diag = app.add_subcommand("diag", "entropy diagnostics for a checkpoint");
    CLI::App * show = app.add_subcommand("show-checkpoint", "list the tensors in a checkpoint");
    for (CLI::App * c : {gen, cold, rl, tune, eval, modes, budget, diag}) {
        add_shared(c, fl);
    }
    show->add_option("path", ckpt_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return run_gen_data(fl);
        }
        if (cold->parsed()) {
            return run_plan(fl, {StageKind::cold_start});
        }
        if (rl->parsed()) {
            return run_plan(fl, {StageKind::rl});
        }
        if (tune->parsed()) {
            return run_plan(fl, {StageKind::connector_tune});
        }
        if (eval->parsed()) {
            return run_plan(fl, {StageKind::eval});
        }
        if (modes->parsed()) {
            return run_plan(fl, {StageKind::modes_sweep});
        }
        if (budget->parsed()) {
            return run_plan(fl, {StageKind::budget_sweep});
        }
        if (diag->parsed()) {
            return run_diag(fl);
        }
        if (show->parsed()) {
            return run_show_checkpoint(ckpt_path);
        }
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
