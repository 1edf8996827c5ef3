#include <doctest.h>

#include "skrl/reward.hpp"
#include "skrl/taskgen.hpp"

#include <numeric>

using namespace skrl;

// brute-force oracle over the grid, written independently of eval_question
namespace {

int oracle_answer(const TaskInstance & inst) {
    const auto & q = inst.question;
    const auto & g = inst.grid;
    auto clause_value = [&](size_t p, size_t & next) -> int {
        if (q[p] == tok::CNT) {
            next = p + 2;
            int want = q[p + 1];
            int c = 0;
            for (size_t r = 0; r < g.size(); ++r) {
                for (size_t j = 0; j < g[r].size(); ++j) {
                    if (Vocab::digit(g[r][j]) == want) {
                        ++c;
                    }
                }
            }
            return c;
        }
        next = p + 3;
        const bool row = q[p + 1] == tok::ROW;
        const int idx = q[p + 2] - tok::IDX0;
        std::vector<int> vals;
        if (row) {
            for (int v : g[idx]) vals.push_back(v);
        } else {
            for (const auto & r : g) vals.push_back(r[idx]);
        }
        if (q[p] == tok::SUM) {
            return std::accumulate(vals.begin(), vals.end(), 0);
        }
        if (q[p] == tok::MAX) {
            int m = vals[0];
            for (int v : vals) m = std::max(m, v);
            return m;
        }
        int prod = 1;
        for (int v : vals) prod *= v;
        return prod;
    };
    size_t p = 0, next = 0;
    int total = clause_value(p, next);
    p = next;
    while (p < q.size()) {
        REQUIRE(q[p] == tok::PLUS);
        total += clause_value(p + 1, next);
        p = next;
    }
    return total;
}

} // namespace

TEST_CASE("known instances evaluate as expected") {
    std::vector<std::vector<int>> grid = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    CHECK(eval_question(grid, {tok::SUM, tok::ROW, Vocab::idx(0)}) == 6);
    CHECK(eval_question(grid, {tok::MAX, tok::COL, Vocab::idx(1)}) == 8);
    CHECK(eval_question(grid, {tok::PROD, tok::ROW, Vocab::idx(1)}) == 120);
    CHECK(eval_question(grid, {tok::CNT, Vocab::digit(5)}) == 1);
    std::vector<std::vector<int>> flat = {{7, 7, 7}};
    CHECK(eval_question(flat, {tok::MAX, tok::ROW, Vocab::idx(0)}) == 7);
}

TEST_CASE("generated instances agree with the brute-force oracle") {
    for (uint64_t s = 0; s < 500; ++s) {
        for (Tier tier : {Tier::Normal, Tier::Hard}) {
            for (Domain dom : {Domain::math, Domain::countB}) {
                TaskInstance inst = gen_instance(s, tier, dom);
                CHECK(inst.answer == oracle_answer(inst));
            }
        }
    }
}

TEST_CASE("gen_instance is deterministic in its seed") {
    auto a = gen_instance(42, Tier::Normal, Domain::math);
    auto b = gen_instance(42, Tier::Normal, Domain::math);
    CHECK(a.grid == b.grid);
    CHECK(a.question == b.question);
    CHECK(a.answer == b.answer);
}

TEST_CASE("gen_dataset determinism and tier mix") {
    auto d1 = gen_dataset(7, 100, {1.0, 0.0}, Domain::math);
    auto d2 = gen_dataset(7, 100, {1.0, 0.0}, Domain::math);
    REQUIRE(d1.size() == d2.size());
    for (size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1[i].grid == d2[i].grid);
        CHECK(d1[i].question == d2[i].question);
        CHECK(d1[i].tier == Tier::Normal);
    }
    CHECK_THROWS(gen_dataset(7, 0, {1.0, 0.0}, Domain::math));
}

TEST_CASE("answer distribution matches oracle recount on 1000 instances") {
    auto ds = gen_dataset(99, 1000, {0.5, 0.5}, Domain::math);
    for (const auto & inst : ds) {
        CHECK(inst.answer == oracle_answer(inst));
    }
}

TEST_CASE("teacher traces score full reward") {
    int with_delib = 0;
    for (uint64_t s = 0; s < 500; ++s) {
        const Tier tier = s % 2 ? Tier::Hard : Tier::Normal;
        const Domain dom = s % 3 ? Domain::math : Domain::countB;
        TaskInstance inst = gen_instance(s * 31 + 5, tier, dom);
        TeacherTrace tr = teacher_trace(inst, s);
        CAPTURE(Vocab::decode(tr.tokens));
        CHECK(format_reward(tr.tokens) == 1);
        CHECK(rule_accuracy(tr.tokens, inst) == 1);
        for (int t : tr.tokens) {
            if (t == tok::WAIT || t == tok::ALT || t == tok::HMM) {
                ++with_delib;
                break;
            }
        }
    }
    // p_wait = 0.5 default; well away from both extremes
    CHECK(with_delib > 100);
    CHECK(with_delib < 400);
}

TEST_CASE("sum trace spells out the chain") {
    TaskInstance inst;
    inst.grid = {{1, 2, 3}, {0, 0, 0}, {0, 0, 0}};
    inst.question = {tok::SUM, tok::ROW, Vocab::idx(0)};
    inst.answer = 6;
    TaskGenConfig cfg;
    cfg.p_wait = 0.0;
    TeacherTrace tr = teacher_trace(inst, 0, cfg);
    CHECK(Vocab::decode(tr.tokens) ==
          "THINK_OPEN 1 PLUS 2 EQ 3 PLUS 3 EQ 6 THINK_CLOSE ANS 6 EOS");
}

TEST_CASE("p_wait zero yields no deliberative tokens") {
    TaskGenConfig cfg;
    cfg.p_wait = 0.0;
    for (uint64_t s = 0; s < 200; ++s) {
        TaskInstance inst = gen_instance(s, Tier::Normal, Domain::math, cfg);
        TeacherTrace tr = teacher_trace(inst, s, cfg);
        for (int t : tr.tokens) {
            CHECK(t != tok::WAIT);
            CHECK(t != tok::ALT);
            CHECK(t != tok::HMM);
        }
    }
}

TEST_CASE("tier separation: Hard answers and traces dominate Normal") {
    double normal_ans = 0, hard_ans = 0, normal_len = 0, hard_len = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        auto ni = gen_instance(1000 + i, Tier::Normal, Domain::math);
        auto hi = gen_instance(2000 + i, Tier::Hard, Domain::math);
        normal_ans += ni.answer;
        hard_ans += hi.answer;
        normal_len += (double) teacher_trace(ni, i).tokens.size();
        hard_len += (double) teacher_trace(hi, i).tokens.size();
    }
    CHECK(hard_ans / n > normal_ans / n);
    CHECK(hard_len / n > normal_len / n);
}

TEST_CASE("traces respect the max sequence length") {
    TaskGenConfig cfg;
    for (uint64_t s = 0; s < 300; ++s) {
        TaskInstance inst = gen_instance(s, Tier::Hard, Domain::math, cfg);
        TeacherTrace tr = teacher_trace(inst, s, cfg);
        CHECK((int) tr.tokens.size() + 1 + (int) inst.question.size() <= cfg.max_seq_len);
    }
}

TEST_CASE("instance JSON export shape") {
    TaskInstance inst = gen_instance(5, Tier::Normal, Domain::countB);
    std::string j = instance_to_json(inst);
    CHECK(j.find("\"grid\":[[") != std::string::npos);
    CHECK(j.find("\"domain\":\"countB\"") != std::string::npos);
    CHECK(j.find("\"answer\":" + std::to_string(inst.answer)) != std::string::npos);
}
