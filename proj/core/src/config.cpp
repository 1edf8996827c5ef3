#include "skrl/config.hpp"

#include "skrl/decode.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace skrl {

using json = nlohmann::ordered_json;

const char * stage_name(StageKind k) {
    switch (k) {
        case StageKind::cold_start:     return "cold_start";
        case StageKind::rl:             return "rl";
        case StageKind::connector_tune: return "connector_tune";
        case StageKind::eval:           return "eval";
        case StageKind::modes_sweep:    return "modes_sweep";
        case StageKind::budget_sweep:   return "budget_sweep";
    }
    throw contract_error("stage_name: bad kind");
}

StageKind stage_from_name(const std::string & s) {
    for (auto k : {StageKind::cold_start, StageKind::rl, StageKind::connector_tune,
                   StageKind::eval, StageKind::modes_sweep, StageKind::budget_sweep}) {
        if (s == stage_name(k)) {
            return k;
        }
    }
    throw config_error("unknown stage \"" + s + "\"");
}

namespace {

// strict object view: every key must be consumed, leftovers are an error
// naming the full path
struct strict_obj {
    const json & j;
    std::string path;
    std::set<std::string> seen;

    strict_obj(const json & j_, std::string path_) : j(j_), path(std::move(path_)) {
        if (!j.is_object()) {
            throw config_error(path + ": expected a JSON object");
        }
    }

    bool has(const std::string & key) {
        if (j.contains(key)) {
            seen.insert(key);
            return true;
        }
        return false;
    }

    const json & at(const std::string & key) { return j.at(key); }

    std::string child_path(const std::string & key) const { return path + "." + key; }

    template <typename T> void get(const std::string & key, T & out) {
        if (!has(key)) {
            return;
        }
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception & e) {
            throw config_error(child_path(key) + ": " + e.what());
        }
    }

    void finish() const {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!seen.count(it.key())) {
                throw config_error("unknown config key \"" + path + "." + it.key() + "\"");
            }
        }
    }
};

void parse_optimizer(strict_obj & parent, const std::string & key, OptimizerConfig & opt) {
    if (!parent.has(key)) {
        return;
    }
    strict_obj o(parent.at(key), parent.child_path(key));
    std::string kind;
    o.get("kind", kind);
    if (!kind.empty()) {
        if (kind == "sgd_momentum") {
            opt.kind = OptimizerConfig::Kind::sgd_momentum;
        } else if (kind == "adam") {
            opt.kind = OptimizerConfig::Kind::adam;
        } else {
            throw config_error(o.child_path("kind") + ": unknown optimizer \"" + kind + "\"");
        }
    }
    o.get("lr", opt.lr);
    o.get("momentum", opt.momentum);
    o.get("adam_beta1", opt.adam_beta1);
    o.get("adam_beta2", opt.adam_beta2);
    o.get("adam_eps", opt.adam_eps);
    o.finish();
    if (opt.lr <= 0.0f) {
        throw config_error(parent.child_path(key) + ".lr must be positive");
    }
}

void parse_dataset(strict_obj & parent, const std::string & key, DatasetSpec & ds) {
    if (!parent.has(key)) {
        return;
    }
    strict_obj o(parent.at(key), parent.child_path(key));
    o.get("seed", ds.seed);
    o.get("size", ds.size);
    o.get("normal", ds.mix.normal);
    o.get("hard", ds.mix.hard);
    std::string domain;
    o.get("domain", domain);
    if (!domain.empty()) {
        ds.domain = domain_from_name(domain);
    }
    o.finish();
    if (ds.size <= 0) {
        throw config_error(parent.child_path(key) + ".size must be positive");
    }
}

std::set<int> parse_lexicon(strict_obj & o, const std::string & key, const std::set<int> & dflt) {
    if (!o.has(key)) {
        return dflt;
    }
    std::set<int> out;
    for (const auto & v : o.at(key)) {
        std::string name = v.get<std::string>();
        int id = Vocab::from_name(name);
        if (id < 0) {
            throw config_error(o.child_path(key) + ": unknown token \"" + name + "\"");
        }
        out.insert(id);
    }
    return out;
}

} // namespace

ExperimentConfig parse_config(const std::string & text, const std::string & origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error & e) {
        throw config_error(origin + ": " + e.what());
    }

    ExperimentConfig cfg;
    strict_obj root(j, origin);
    root.get("seed", cfg.seed);
    root.get("out_dir", cfg.out_dir);
    root.get("init_checkpoint", cfg.init_checkpoint);
    root.get("workers", cfg.workers);
    root.get("deterministic", cfg.deterministic);
    root.get("reward_mix_accuracy", cfg.reward_mix_accuracy);
    root.get("verifier_commands", cfg.verifier_commands);
    root.get("modes", cfg.modes);
    root.get("budgets", cfg.budgets);
    root.get("eval_seeds", cfg.eval_seeds);
    root.get("sft_dataset_size", cfg.sft_dataset_size);
    root.get("rl_episodes", cfg.rl_episodes);

    if (root.has("policy")) {
        strict_obj o(root.at("policy"), root.child_path("policy"));
        o.get("embed_width", cfg.policy.embed_width);
        o.get("encoder_width", cfg.policy.encoder_width);
        o.get("n_percept", cfg.policy.n_percept);
        o.get("decoder_depth", cfg.policy.decoder_depth);
        o.get("ffn_mult", cfg.policy.ffn_mult);
        o.get("max_seq_len", cfg.policy.max_seq_len);
        o.get("grid_h", cfg.policy.grid_h);
        o.get("grid_w", cfg.policy.grid_w);
        o.get("init_range", cfg.policy.init_range);
        o.finish();
    }

    if (root.has("teacher")) {
        strict_obj o(root.at("teacher"), root.child_path("teacher"));
        o.get("p_wait", cfg.rl.taskgen.p_wait);
        o.get("p_nothink", cfg.rl.taskgen.p_nothink);
        o.finish();
    }

    if (root.has("rl")) {
        strict_obj o(root.at("rl"), root.child_path("rl"));
        o.get("rollouts_per_episode", cfg.rl.rollouts_per_episode);
        o.get("group_size", cfg.rl.group_size);
        o.get("grad_steps_per_episode", cfg.rl.grad_steps_per_episode);
        o.get("clip_low", cfg.rl.clip_low);
        o.get("clip_high", cfg.rl.clip_high);
        o.get("kl_beta", cfg.rl.kl_beta);
        o.get("dynamic_sampling", cfg.rl.dynamic_sampling);
        o.get("max_refills", cfg.rl.max_refills);
        o.get("temperature", cfg.rl.temperature);
        o.get("max_new_tokens", cfg.rl.max_new_tokens);
        o.get("long_rollout_episode", cfg.rl.long_rollout_episode);
        o.get("long_max_new_tokens", cfg.rl.long_max_new_tokens);
        std::string domain;
        o.get("domain", domain);
        if (!domain.empty()) {
            cfg.rl.domain = domain_from_name(domain);
        }
        if (o.has("curriculum")) {
            cfg.rl.curriculum.clear();
            const json & arr = o.at("curriculum");
            for (size_t i = 0; i < arr.size(); ++i) {
                strict_obj c(arr[i], o.child_path("curriculum") + "[" + std::to_string(i) + "]");
                CurriculumStage st;
                c.get("start_episode", st.start_episode);
                c.get("normal", st.mix.normal);
                c.get("hard", st.mix.hard);
                c.finish();
                cfg.rl.curriculum.push_back(st);
            }
        }
        parse_optimizer(o, "optimizer", cfg.rl.optimizer);
        o.finish();
    }

    if (root.has("sft")) {
        strict_obj o(root.at("sft"), root.child_path("sft"));
        o.get("batch_size", cfg.sft.batch_size);
        o.get("warmup_ratio", cfg.sft.warmup_ratio);
        o.get("epochs", cfg.sft.epochs);
        o.get("max_seq_len", cfg.sft.max_seq_len);
        o.get("patience", cfg.sft.patience);
        o.get("val_fraction", cfg.sft.val_fraction);
        o.get("format_target", cfg.sft.format_target);
        parse_optimizer(o, "optimizer", cfg.sft.optimizer);
        o.finish();
    }

    if (root.has("diagnostics")) {
        strict_obj o(root.at("diagnostics"), root.child_path("diagnostics"));
        cfg.diag.critical_lexicon = parse_lexicon(o, "critical_lexicon", cfg.diag.critical_lexicon);
        o.get("tail_tau", cfg.diag.tail_tau);
        o.get("after_think_open", cfg.diag.after_think_open);
        o.finish();
    }

    parse_dataset(root, "train_dataset", cfg.train_dataset);
    parse_dataset(root, "eval_dataset", cfg.eval_dataset);
    parse_dataset(root, "contrast_dataset", cfg.contrast_dataset);

    if (root.has("plan")) {
        cfg.plan.clear();
        for (const auto & v : root.at("plan")) {
            cfg.plan.push_back(stage_from_name(v.get<std::string>()));
        }
    }
    root.finish();

    if (cfg.reward_mix_accuracy < 0.0f || cfg.reward_mix_accuracy > 1.0f) {
        throw config_error("reward_mix_accuracy must lie in [0, 1]");
    }
    if (cfg.workers < 1) {
        throw config_error("workers must be >= 1");
    }
    if (cfg.rl.taskgen.p_wait < 0.0 || cfg.rl.taskgen.p_wait > 1.0 ||
        cfg.rl.taskgen.p_nothink < 0.0 || cfg.rl.taskgen.p_nothink > 1.0) {
        throw config_error("teacher trace probabilities must lie in [0, 1]");
    }
    if (cfg.eval_seeds < 1) {
        throw config_error("eval_seeds must be >= 1");
    }
    if (cfg.rl_episodes < 0) {
        throw config_error("rl_episodes must be >= 0");
    }
    cfg.rl.reward_mix = cfg.reward_mix_accuracy;
    cfg.rl.critical_lexicon = cfg.diag.critical_lexicon;
    cfg.rl.tail_tau = cfg.diag.tail_tau;
    cfg.rl.taskgen.grid_h = cfg.policy.grid_h;
    cfg.rl.taskgen.grid_w = cfg.policy.grid_w;
    cfg.rl.taskgen.max_seq_len = cfg.policy.max_seq_len;
    cfg.sft.max_seq_len = std::min(cfg.sft.max_seq_len, cfg.policy.max_seq_len);
    if (cfg.deterministic) {
        cfg.workers = 1;
    }
    cfg.rl.workers = cfg.workers;
    cfg.sft.workers = cfg.workers;
    for (const std::string & m : cfg.modes) {
        decode_mode_from_name(m); // validates
    }
    return cfg;
}

ExperimentConfig load_config(const std::string & path) {
    std::ifstream f(path);
    if (!f) {
        throw config_error("load_config: cannot open " + path);
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

std::string config_to_json(const ExperimentConfig & cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["init_checkpoint"] = cfg.init_checkpoint;
    j["workers"] = cfg.workers;
    j["deterministic"] = cfg.deterministic;
    j["policy"] = {{"embed_width", cfg.policy.embed_width},
                   {"encoder_width", cfg.policy.encoder_width},
                   {"n_percept", cfg.policy.n_percept},
                   {"decoder_depth", cfg.policy.decoder_depth},
                   {"ffn_mult", cfg.policy.ffn_mult},
                   {"max_seq_len", cfg.policy.max_seq_len},
                   {"grid_h", cfg.policy.grid_h},
                   {"grid_w", cfg.policy.grid_w},
                   {"init_range", cfg.policy.init_range}};
    auto opt_json = [](const OptimizerConfig & o) {
        return json{{"kind", o.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd_momentum"},
                    {"lr", o.lr},
                    {"momentum", o.momentum},
                    {"adam_beta1", o.adam_beta1},
                    {"adam_beta2", o.adam_beta2},
                    {"adam_eps", o.adam_eps}};
    };
    json curriculum = json::array();
    for (const auto & st : cfg.rl.curriculum) {
        curriculum.push_back({{"start_episode", st.start_episode},
                              {"normal", st.mix.normal},
                              {"hard", st.mix.hard}});
    }
    j["rl"] = {{"rollouts_per_episode", cfg.rl.rollouts_per_episode},
               {"group_size", cfg.rl.group_size},
               {"grad_steps_per_episode", cfg.rl.grad_steps_per_episode},
               {"clip_low", cfg.rl.clip_low},
               {"clip_high", cfg.rl.clip_high},
               {"kl_beta", cfg.rl.kl_beta},
               {"dynamic_sampling", cfg.rl.dynamic_sampling},
               {"max_refills", cfg.rl.max_refills},
               {"temperature", cfg.rl.temperature},
               {"max_new_tokens", cfg.rl.max_new_tokens},
               {"long_rollout_episode", cfg.rl.long_rollout_episode},
               {"long_max_new_tokens", cfg.rl.long_max_new_tokens},
               {"domain", domain_name(cfg.rl.domain)},
               {"curriculum", curriculum},
               {"optimizer", opt_json(cfg.rl.optimizer)}};
    j["rl_episodes"] = cfg.rl_episodes;
    j["teacher"] = {{"p_wait", cfg.rl.taskgen.p_wait}, {"p_nothink", cfg.rl.taskgen.p_nothink}};
    j["sft"] = {{"batch_size", cfg.sft.batch_size},
                {"warmup_ratio", cfg.sft.warmup_ratio},
                {"epochs", cfg.sft.epochs},
                {"max_seq_len", cfg.sft.max_seq_len},
                {"patience", cfg.sft.patience},
                {"val_fraction", cfg.sft.val_fraction},
                {"format_target", cfg.sft.format_target},
                {"optimizer", opt_json(cfg.sft.optimizer)}};
    j["sft_dataset_size"] = cfg.sft_dataset_size;
    j["reward_mix_accuracy"] = cfg.reward_mix_accuracy;
    j["verifier_commands"] = cfg.verifier_commands;
    json lex = json::array();
    for (int id : cfg.diag.critical_lexicon) {
        lex.push_back(Vocab::name(id));
    }
    j["diagnostics"] = {{"critical_lexicon", lex},
                        {"tail_tau", cfg.diag.tail_tau},
                        {"after_think_open", cfg.diag.after_think_open}};
    j["modes"] = cfg.modes;
    j["budgets"] = cfg.budgets;
    j["eval_seeds"] = cfg.eval_seeds;
    auto ds_json = [](const DatasetSpec & d) {
        return json{{"seed", d.seed},
                    {"size", d.size},
                    {"normal", d.mix.normal},
                    {"hard", d.mix.hard},
                    {"domain", domain_name(d.domain)}};
    };
    j["train_dataset"] = ds_json(cfg.train_dataset);
    j["eval_dataset"] = ds_json(cfg.eval_dataset);
    j["contrast_dataset"] = ds_json(cfg.contrast_dataset);
    json plan = json::array();
    for (auto k : cfg.plan) {
        plan.push_back(stage_name(k));
    }
    j["plan"] = plan;
    return j.dump(2) + "\n";
}

} // namespace skrl
