#include <doctest.h>

#include "skrl/policy.hpp"
#include "skrl/tape.hpp"
#include "skrl/taskgen.hpp"

#include <cmath>

using namespace skrl;

namespace {

PolicyConfig small_config() {
    PolicyConfig cfg;
    cfg.embed_width = 16;
    cfg.encoder_width = 16;
    cfg.n_percept = 4;
    cfg.decoder_depth = 1;
    cfg.max_seq_len = 32;
    return cfg;
}

TaskInstance some_instance(uint64_t seed = 3) {
    return gen_instance(seed, Tier::Normal, Domain::math);
}

} // namespace

TEST_CASE("encode determinism and zero-grid linearity") {
    Policy p(small_config());
    p.init_params(1);
    TaskInstance inst = some_instance();

    auto e1 = p.encode(inst.grid);
    auto e2 = p.encode(inst.grid);
    CHECK(e1 == e2);
    CHECK((int) e1.size() == p.config().n_percept);
    CHECK((int) e1[0].size() == p.config().encoder_width);

    // zero embeddings + zero biases collapse the encoder to zero output
    for (const char * n : {"enc.digit_embed", "enc.cell_pos", "enc.b1", "enc.b2"}) {
        auto & t = p.params().get(n).value;
        std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    std::vector<std::vector<int>> zero_grid(3, std::vector<int>(3, 0));
    for (const auto & v : p.encode(zero_grid)) {
        for (float x : v) {
            CHECK(x == 0.0f);
        }
    }
}

TEST_CASE("encode rejects malformed grids") {
    Policy p(small_config());
    p.init_params(1);
    CHECK_THROWS_AS(p.encode({{1, 2}, {3, 4}}), shape_error);
}

TEST_CASE("one-cell perturbation changes the embeddings") {
    Policy p(small_config());
    p.init_params(2);
    std::vector<std::vector<int>> g1 = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    auto g2 = g1;
    g2[1][1] = (g2[1][1] + 1) % 10;
    CHECK(p.encode(g1) != p.encode(g2));
}

TEST_CASE("identity connector passes embeddings through") {
    Policy p(small_config());
    p.init_params(3);
    p.init_connector_identity();
    auto e = p.encode(some_instance().grid);
    CHECK(p.connect(e) == e);

    // zero connector -> zero output
    auto & w = p.params().get("conn.w").value;
    auto & b = p.params().get("conn.b").value;
    std::fill(w.data.begin(), w.data.end(), 0.0f);
    std::fill(b.data.begin(), b.data.end(), 0.0f);
    for (const auto & v : p.connect(e)) {
        for (float x : v) {
            CHECK(x == 0.0f);
        }
    }
}

TEST_CASE("frozen connector receives no gradient") {
    Policy p(small_config());
    p.init_params(4);
    TaskInstance inst = some_instance();
    std::vector<int> toks = {tok::BOS, tok::THINK_OPEN, tok::THINK_CLOSE, tok::ANS, Vocab::digit(0), tok::EOS};

    auto run = [&](bool freeze) {
        p.apply_freeze_mask(freeze ? std::set<std::string>{"connector"} : std::set<std::string>{});
        p.params().zero_grad();
        Tape tp;
        TapeLeaves lv = p.make_leaves(tp);
        auto logits = p.forward_logits_tape(tp, lv, inst, toks);
        auto loss = ops::sum(tp, ops::mul(tp, logits, logits));
        tp.backward(loss);
        p.accumulate_grads(tp, lv);
        double total = 0.0;
        for (float g : p.params().get("conn.w").grad.data) {
            total += std::fabs(g);
        }
        return total;
    };
    CHECK(run(false) > 0.0);
    CHECK(run(true) == 0.0);
    CHECK_THROWS_AS(p.apply_freeze_mask({"attention"}), config_error);
}

TEST_CASE("decode_step causality: future edits leave logits unchanged") {
    Policy p(small_config());
    p.init_params(5);
    TaskInstance inst = some_instance();
    std::vector<int> prefix = {tok::BOS, tok::SUM, tok::ROW, Vocab::idx(0), tok::THINK_OPEN, Vocab::digit(1)};
    auto base = p.decode_step(inst, prefix, 3);
    auto mutated = prefix;
    mutated[4] = tok::WAIT;
    mutated[5] = Vocab::digit(9);
    auto after = p.decode_step(inst, mutated, 3);
    CHECK(base == after);

    auto again = p.decode_step(inst, prefix, 3);
    CHECK(base == again); // determinism
    for (float v : base) {
        CHECK(std::isfinite(v));
    }
    CHECK_THROWS_AS(p.decode_step(inst, prefix, 99), length_error_skrl);
}

TEST_CASE("tape forward matches the incremental session") {
    Policy p(small_config());
    p.init_params(6);
    TaskInstance inst = some_instance();
    std::vector<int> toks = {tok::BOS, tok::SUM, tok::ROW, Vocab::idx(1), tok::THINK_OPEN,
                             Vocab::digit(4), tok::PLUS, Vocab::digit(2)};
    Tape tp;
    TapeLeaves lv = p.make_leaves(tp);
    auto logits = p.forward_logits_tape(tp, lv, inst, toks);
    const Tensor & lg = tp.value(logits);

    const int k = p.config().n_percept;
    for (size_t pos = 0; pos < toks.size(); ++pos) {
        auto step = p.decode_step(inst, toks, (int) pos);
        for (int j = 0; j < p.config().vocab_size; ++j) {
            CHECK(lg.at(k + (int) pos, j) == doctest::Approx(step[j]).epsilon(2e-3));
        }
    }
}

TEST_CASE("sampling reproducibility and greedy temperature") {
    Policy p(small_config());
    p.init_params(7);
    TaskInstance inst = some_instance();

    SampleControls ctl;
    ctl.temperature = 1.0f;
    Rollout a = p.sample_sequence(inst, ctl, 123);
    Rollout b = p.sample_sequence(inst, ctl, 123);
    CHECK(a.tokens == b.tokens);
    CHECK(a.logprobs == b.logprobs);

    ctl.temperature = 0.0f;
    Rollout g1 = p.sample_sequence(inst, ctl, 1);
    Rollout g2 = p.sample_sequence(inst, ctl, 999);
    CHECK(g1.tokens == g2.tokens); // greedy ignores the seed
}

TEST_CASE("banned tokens never appear and carry zero probability") {
    Policy p(small_config());
    p.init_params(8);
    TaskInstance inst = some_instance();
    SampleControls ctl;
    ctl.banned = {tok::WAIT, tok::ALT, tok::HMM};
    for (uint64_t s = 0; s < 20; ++s) {
        Rollout r = p.sample_sequence(inst, ctl, s);
        for (int t : r.tokens) {
            CHECK(t != tok::WAIT);
            CHECK(t != tok::ALT);
            CHECK(t != tok::HMM);
        }
    }
}

TEST_CASE("sampled log-probs match recomputed renormalized probabilities") {
    Policy p(small_config());
    p.init_params(9);
    TaskInstance inst = some_instance();
    SampleControls ctl;
    ctl.banned = {tok::WAIT};
    Rollout r = p.sample_sequence(inst, ctl, 77);
    REQUIRE(!r.tokens.empty());

    std::vector<int> prefix = r.prompt;
    for (size_t t = 0; t < r.tokens.size(); ++t) {
        auto logits = p.decode_step(inst, prefix, (int) prefix.size() - 1);
        // entropy is recorded over the unbanned distribution
        std::vector<float> full = logits;
        ops::softmax_inplace(full);
        CHECK(r.entropies[t] == doctest::Approx(ops::entropy_nats(full)).epsilon(1e-5));
        // log-prob is recorded post-ban
        std::vector<float> masked = logits;
        masked[tok::WAIT] = -std::numeric_limits<float>::infinity();
        ops::softmax_inplace(masked);
        CHECK(std::exp(r.logprobs[t]) == doctest::Approx(masked[r.tokens[t]]).epsilon(1e-5));
        prefix.push_back(r.tokens[t]);
    }
}

TEST_CASE("sampling rejects impossible configurations") {
    Policy p(small_config());
    p.init_params(10);
    TaskInstance inst = some_instance();
    SampleControls ctl;
    ctl.banned = {tok::EOS};
    CHECK_THROWS_AS(p.sample_sequence(inst, ctl, 0), contract_error);

    SampleControls all_banned;
    for (int t = 0; t < tok::VOCAB_SIZE; ++t) {
        if (t != tok::EOS) {
            all_banned.banned.insert(t);
        }
    }
    all_banned.banned_first_step = {tok::EOS};
    // first step has every token banned in this configuration
    // (EOS via first-step set, the rest via the global set)
    bool threw = false;
    try {
        auto r = p.sample_sequence(inst, all_banned, 0);
        (void) r;
    } catch (const degenerate_distribution_error &) {
        threw = true;
    } catch (const contract_error &) {
        threw = true;
    }
    CHECK(threw);
}

TEST_CASE("freeze exactness after optimizer steps") {
    Policy p(small_config());
    p.init_params(11);
    TaskInstance inst = some_instance();
    std::vector<int> toks = {tok::BOS, tok::THINK_OPEN, Vocab::digit(3), tok::THINK_CLOSE,
                             tok::ANS, Vocab::digit(3), tok::EOS};
    OptimizerConfig opt;
    opt.lr = 0.01f;

    auto step_once = [&] {
        p.params().zero_grad();
        Tape tp;
        TapeLeaves lv = p.make_leaves(tp);
        auto logits = p.forward_logits_tape(tp, lv, inst, toks);
        auto loss = ops::sum(tp, ops::mul(tp, logits, logits));
        tp.backward(loss);
        p.accumulate_grads(tp, lv);
        p.params().step(opt);
    };

    SUBCASE("encoder+decoder frozen leaves only connector moving") {
        p.apply_freeze_mask({"encoder", "decoder"});
        std::map<std::string, std::vector<float>> before;
        for (auto & pr : p.params().all()) {
            before[pr.name] = pr.value.data;
        }
        for (int i = 0; i < 3; ++i) {
            step_once();
        }
        bool connector_moved = false;
        for (auto & pr : p.params().all()) {
            if (pr.label == ModuleLabel::connector) {
                connector_moved = connector_moved || pr.value.data != before[pr.name];
            } else {
                CHECK(pr.value.data == before[pr.name]); // bit-identical
            }
        }
        CHECK(connector_moved);
    }

    SUBCASE("all frozen is a no-op, none frozen moves everything") {
        p.apply_freeze_mask({"encoder", "connector", "decoder"});
        std::map<std::string, std::vector<float>> before;
        for (auto & pr : p.params().all()) {
            before[pr.name] = pr.value.data;
        }
        step_once();
        for (auto & pr : p.params().all()) {
            CHECK(pr.value.data == before[pr.name]);
        }

        p.apply_freeze_mask({});
        step_once();
        int moved = 0;
        for (auto & pr : p.params().all()) {
            moved += pr.value.data != before[pr.name] ? 1 : 0;
        }
        CHECK(moved > (int) p.params().all().size() / 2);
    }
}
