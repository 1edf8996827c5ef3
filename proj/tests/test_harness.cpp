#include <doctest.h>

#include "skrl/experiment.hpp"
#include "skrl/metrics.hpp"

#include <filesystem>
#include <fstream>

using namespace skrl;
namespace fs = std::filesystem;

static std::string tmp_path(const std::string & name) {
    return (fs::temp_directory_path() / name).string();
}

static std::string slurp(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

static void spit(const std::string & path, const std::string & data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(data.data(), (std::streamsize) data.size());
}

static PolicyConfig small_config() {
    PolicyConfig cfg;
    cfg.embed_width = 16;
    cfg.encoder_width = 16;
    cfg.n_percept = 4;
    cfg.decoder_depth = 1;
    cfg.max_seq_len = 24;
    return cfg;
}

TEST_CASE("checkpoint round-trips every tensor bit-exactly") {
    Policy p(small_config());
    p.init_params(42);
    std::string path = tmp_path("skrl_ckpt_roundtrip.ckpt");
    save_checkpoint(p.params(), path);

    ParamStore loaded = load_checkpoint(path);
    REQUIRE(loaded.all().size() == p.params().all().size());
    for (const Param & a : p.params().all()) {
        REQUIRE(loaded.has(a.name));
        const Param & b = loaded.get(a.name);
        CHECK(b.label == a.label);
        CHECK(b.value.shape == a.value.shape);
        CHECK(b.value.data == a.value.data); // bitwise: f32 through u32 framing
    }

    Policy q(small_config());
    q.init_params(7);
    load_checkpoint_into(q.params(), path);
    for (const Param & a : p.params().all()) {
        CHECK(q.params().get(a.name).value.data == a.value.data);
    }
    fs::remove(path);
}

TEST_CASE("checkpoint corruption, truncation, and version checks") {
    Policy p(small_config());
    p.init_params(1);
    std::string path = tmp_path("skrl_ckpt_corrupt.ckpt");
    save_checkpoint(p.params(), path);
    std::string good = slurp(path);

    // flip one payload byte -> CRC mismatch
    std::string bad = good;
    bad[bad.size() / 2] ^= 0x40;
    spit(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), corruption_error);

    // drop the tail -> truncation
    spit(path, good.substr(0, good.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(path), corruption_error);

    // wrong magic
    bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), corruption_error);

    // unsupported format version
    bad = good;
    bad[4] = 9;
    spit(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), version_error);

    spit(path, good);
    CHECK_NOTHROW(load_checkpoint(path));
    fs::remove(path);
}

TEST_CASE("checkpoint from a different policy rejects by tensor shape") {
    Policy p(small_config());
    p.init_params(1);
    std::string path = tmp_path("skrl_ckpt_shape.ckpt");
    save_checkpoint(p.params(), path);

    PolicyConfig other = small_config();
    other.embed_width = 32;
    Policy q(other);
    q.init_params(1);
    try {
        load_checkpoint_into(q.params(), path);
        FAIL("expected shape_error");
    } catch (const shape_error & e) {
        CHECK(std::string(e.what()).find("mismatched shape") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("minimal config applies documented defaults") {
    ExperimentConfig cfg = parse_config("{\"seed\": 5}");
    CHECK(cfg.seed == 5);
    CHECK(cfg.policy.embed_width == 64);
    CHECK(cfg.rl.group_size == 8);
    CHECK(cfg.rl.clip_low == doctest::Approx(0.2f));
    CHECK(cfg.sft.epochs == 2);
    CHECK(cfg.reward_mix_accuracy == doctest::Approx(0.8f));
    CHECK(cfg.eval_seeds == 5);
    CHECK(cfg.modes == std::vector<std::string>{"slow", "nothink", "nowait"});
    CHECK(cfg.plan.empty());
}

TEST_CASE("unknown config keys are rejected by name") {
    try {
        parse_config("{\"learing_rate\": 0.1}");
        FAIL("expected config_error");
    } catch (const config_error & e) {
        CHECK(std::string(e.what()).find("learing_rate") != std::string::npos);
    }
    try {
        parse_config("{\"rl\": {\"group_sizee\": 4}}");
        FAIL("expected config_error");
    } catch (const config_error & e) {
        CHECK(std::string(e.what()).find("rl.group_sizee") != std::string::npos);
    }
}

TEST_CASE("config values propagate and invalid ones fail") {
    ExperimentConfig cfg = parse_config(
        "{\"reward_mix_accuracy\": 0.6, \"rl\": {\"clip_high\": 0.28}, "
        "\"plan\": [\"cold_start\", \"rl\", \"eval\"], "
        "\"diagnostics\": {\"critical_lexicon\": [\"WAIT\"]}}");
    CHECK(cfg.rl.reward_mix == doctest::Approx(0.6f));
    CHECK(cfg.rl.clip_high == doctest::Approx(0.28f));
    REQUIRE(cfg.plan.size() == 3);
    CHECK(cfg.plan[1] == StageKind::rl);
    CHECK(cfg.diag.critical_lexicon == std::set<int>{tok::WAIT});
    CHECK(cfg.rl.critical_lexicon == std::set<int>{tok::WAIT});

    CHECK_THROWS_AS(parse_config("{\"reward_mix_accuracy\": 1.5}"), config_error);
    CHECK_THROWS_AS(parse_config("{\"plan\": [\"warmup\"]}"), config_error);
    CHECK_THROWS_AS(parse_config("{\"modes\": [\"fast\"]}"), config_error);
    CHECK_THROWS_AS(parse_config("{\"rl\": {\"optimizer\": {\"lr\": 0}}}"), config_error);
    CHECK_THROWS_AS(parse_config("{\"diagnostics\": {\"critical_lexicon\": [\"NOPE\"]}}"),
                    config_error);
    CHECK_THROWS_AS(parse_config("{\"seed\": }"), config_error);
    try {
        parse_config("{\"seed\": }", "bad.json");
        FAIL("expected config_error");
    } catch (const config_error & e) {
        CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
    }
}

TEST_CASE("config serialization round-trips") {
    ExperimentConfig cfg = parse_config(
        "{\"seed\": 9, \"rl\": {\"kl_beta\": 0.01, \"curriculum\": "
        "[{\"start_episode\": 0, \"normal\": 1.0}, {\"start_episode\": 10, \"hard\": 0.5, "
        "\"normal\": 0.5}]}, \"plan\": [\"rl\", \"budget_sweep\"]}");
    std::string text = config_to_json(cfg);
    ExperimentConfig again = parse_config(text);
    CHECK(config_to_json(again) == text);
    CHECK(again.rl.curriculum.size() == 2);
    CHECK(again.rl.curriculum[1].mix.hard == doctest::Approx(0.5));
}

TEST_CASE("deterministic flag forces one worker") {
    ExperimentConfig cfg = parse_config("{\"workers\": 8, \"deterministic\": true}");
    CHECK(cfg.workers == 1);
    CHECK(cfg.rl.workers == 1);
}

TEST_CASE("metrics logger emits stable JSONL") {
    std::string path = tmp_path("skrl_metrics_a.jsonl");
    for (int rep = 0; rep < 2; ++rep) {
        fs::remove(path);
        MetricsLogger log(path, true);
        MetricsRecord r;
        r.stage = "rl";
        r.index = 3;
        r.mean_reward = 0.5;
        r.critical_entropy = 1.25;
        r.extra["kept"] = 12;
        log.log(r);
        MetricsRecord q;
        q.stage = "eval";
        log.log(q);
        if (rep == 0) {
            spit(tmp_path("skrl_metrics_b.jsonl"), slurp(path));
        }
    }
    CHECK(slurp(path) == slurp(tmp_path("skrl_metrics_b.jsonl")));
    std::string text = slurp(path);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text.find("\"critical_entropy\":1.25") != std::string::npos);
    fs::remove(path);
    fs::remove(tmp_path("skrl_metrics_b.jsonl"));
}

TEST_CASE("eval accuracy: stats, greedy degeneracy, offline recomputation") {
    Policy p(small_config());
    p.init_params(3);
    auto ds = gen_dataset(50, 8, {1.0, 0.0}, Domain::math);
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

    EvalResult r = eval_accuracy(p, ds, DecodeMode::slow(), seeds);
    REQUIRE(r.per_seed.size() == 5);
    double mean = 0;
    for (double v : r.per_seed) {
        mean += v;
    }
    CHECK(r.mean == doctest::Approx(mean / 5).epsilon(1e-12));

    // greedy decoding ignores the seed: identical per-seed values, zero std
    EvalResult g = eval_accuracy(p, ds, DecodeMode::slow(0.0f), seeds);
    for (double v : g.per_seed) {
        CHECK(v == g.per_seed[0]);
    }
    CHECK(g.stddev == doctest::Approx(0.0));

    // recompute the greedy figure instance by instance
    double acc = 0;
    for (const auto & inst : ds) {
        acc += decode(p, inst, DecodeMode::slow(0.0f), 0).reward.accuracy;
    }
    CHECK(g.mean == doctest::Approx(acc / (double) ds.size()).epsilon(1e-12));

    CHECK_THROWS_AS(eval_accuracy(p, {}, DecodeMode::slow(), seeds), contract_error);
    CHECK_THROWS_AS(eval_accuracy(p, ds, DecodeMode::slow(), {}), contract_error);
}

static std::string tiny_experiment_json(const std::string & out_dir) {
    return "{\"seed\": 11, \"deterministic\": true, \"out_dir\": \"" + out_dir + "\","
           "\"policy\": {\"embed_width\": 16, \"encoder_width\": 16, \"decoder_depth\": 1, "
           "\"max_seq_len\": 48},"
           "\"sft\": {\"batch_size\": 8, \"epochs\": 1, \"optimizer\": {\"kind\": \"adam\", "
           "\"lr\": 0.003}},"
           "\"sft_dataset_size\": 24,"
           "\"rl\": {\"rollouts_per_episode\": 8, \"group_size\": 4, \"max_new_tokens\": 10},"
           "\"rl_episodes\": 2,"
           "\"eval_seeds\": 2,"
           "\"eval_dataset\": {\"seed\": 60, \"size\": 6},"
           "\"budgets\": [0, 2],"
           "\"plan\": [\"cold_start\", \"rl\", \"eval\", \"modes_sweep\", \"budget_sweep\"]}";
}

TEST_CASE("experiment plan runs end to end, twice, byte-identically") {
    std::string out_a = tmp_path("skrl_exp_a");
    std::string out_b = tmp_path("skrl_exp_b");
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    ExperimentConfig ca = parse_config(tiny_experiment_json(out_a));
    ExperimentReport ra = run_experiment(ca);
    REQUIRE(ra.ok);
    REQUIRE(ra.stages.size() == 5);
    for (const auto & s : ra.stages) {
        CHECK(s.ok);
        for (const auto & a : s.artifacts) {
            CHECK(fs::exists(a));
        }
    }

    // chained checkpoints exist and load
    ParamStore cold = load_checkpoint(out_a + "/0_cold_start.ckpt");
    ParamStore post = load_checkpoint(out_a + "/1_rl.ckpt");
    CHECK(cold.all().size() == post.all().size());

    // csv tables have the pinned header
    std::string csv = slurp(out_a + "/4_budget_sweep.csv");
    CHECK(csv.rfind("mode,budget,seed,accuracy,mean_length\n", 0) == 0);

    ExperimentConfig cb = parse_config(tiny_experiment_json(out_b));
    ExperimentReport rb = run_experiment(cb);
    REQUIRE(rb.ok);
    CHECK(slurp(out_a + "/metrics.jsonl") == slurp(out_b + "/metrics.jsonl"));
    CHECK(slurp(out_a + "/0_cold_start.ckpt") == slurp(out_b + "/0_cold_start.ckpt"));
    CHECK(slurp(out_a + "/1_rl.ckpt") == slurp(out_b + "/1_rl.ckpt"));
    CHECK(slurp(out_a + "/3_modes_sweep.csv") == slurp(out_b + "/3_modes_sweep.csv"));

    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("a failing stage halts the plan but keeps prior artifacts") {
    std::string out = tmp_path("skrl_exp_fail");
    fs::remove_all(out);
    ExperimentConfig cfg = parse_config(
        "{\"seed\": 1, \"deterministic\": true, \"out_dir\": \"" + out + "\","
        "\"policy\": {\"embed_width\": 16, \"encoder_width\": 16, \"max_seq_len\": 24},"
        "\"rl\": {\"rollouts_per_episode\": 8, \"group_size\": 4, \"max_new_tokens\": 10},"
        "\"rl_episodes\": 1,"
        "\"plan\": [\"rl\", \"connector_tune\", \"eval\"]}");
    // connector tune demands a trainable connector; freeze it to force a failure
    cfg.sft.frozen_labels = {"connector"};
    ExperimentReport r = run_experiment(cfg);
    CHECK(!r.ok);
    REQUIRE(r.stages.size() == 2);
    CHECK(r.stages[0].ok);
    CHECK(!r.stages[1].ok);
    CHECK(!r.stages[1].error.empty());
    CHECK(fs::exists(out + "/0_rl.ckpt"));
    fs::remove_all(out);
}
