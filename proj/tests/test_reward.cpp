#include <doctest.h>

#include "skrl/reward.hpp"

#include <memory>

using namespace skrl;

namespace {

std::vector<int> seq(const std::string & text) { return Vocab::encode(text); }

TaskInstance instance_with_answer(int answer) {
    TaskInstance inst;
    inst.grid = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    inst.question = {tok::SUM, tok::ROW, Vocab::idx(0)};
    inst.answer = answer;
    return inst;
}

class FixedVerifier : public VerifierClient {
  public:
    explicit FixedVerifier(int v) : v_(v) {}
    int score(const std::string &, const std::string &) override { return v_; }
    std::string name() const override { return "fixed"; }

  private:
    int v_;
};

} // namespace

TEST_CASE("format reward template matching") {
    CHECK(format_reward(seq("THINK_OPEN 1 PLUS 2 THINK_CLOSE ANS 6 EOS")) == 1);
    CHECK(format_reward(seq("BOS THINK_OPEN THINK_CLOSE ANS 0 EOS")) == 1);
    CHECK(format_reward(seq("THINK_OPEN 1 2 ANS 6 EOS")) == 0);            // no close
    CHECK(format_reward(seq("THINK_OPEN THINK_CLOSE THINK_OPEN THINK_CLOSE ANS 6 EOS")) == 0); // two blocks
    CHECK(format_reward(seq("ANS 6 EOS")) == 0);                           // no think block
    CHECK(format_reward(seq("THINK_OPEN THINK_CLOSE ANS EOS")) == 0);      // no digits
    CHECK(format_reward(seq("THINK_OPEN THINK_CLOSE ANS 6")) == 0);        // no EOS
    CHECK(format_reward(seq("THINK_OPEN THINK_CLOSE ANS 6 EOS 3")) == 0);  // trailing junk
    CHECK(format_reward({}) == 0);
}

TEST_CASE("format reward ignores think-block content") {
    CHECK(format_reward(seq("THINK_OPEN WAIT HMM 9 PLUS TIMES EQ ALT THINK_CLOSE ANS 1 2 EOS")) == 1);
}

TEST_CASE("rule accuracy parses the last ANS digit run") {
    auto inst = instance_with_answer(6);
    CHECK(rule_accuracy(seq("ANS 6 EOS"), inst) == 1);
    CHECK(rule_accuracy(seq("ANS 0 6"), inst) == 1); // leading zeros accepted
    CHECK(rule_accuracy(seq("THINK_OPEN 1 THINK_CLOSE EOS"), inst) == 0); // no ANS
    CHECK(rule_accuracy(seq("ANS 7"), inst) == 0);
    CHECK(rule_accuracy(seq("ANS 5 ANS 6"), inst) == 1); // last ANS wins
    CHECK(rule_accuracy(seq("ANS EOS"), inst) == 0);     // unparseable
}

TEST_CASE("accuracy reward is an OR over verifiers") {
    auto inst = instance_with_answer(6);
    auto correct = seq("ANS 6");
    auto wrong = seq("ANS 7");

    CHECK(accuracy_reward(correct, inst, {std::make_shared<FixedVerifier>(0)}) == 1); // rule 1, ext 0
    CHECK(accuracy_reward(wrong, inst, {std::make_shared<FixedVerifier>(0)}) == 0);   // both 0
    CHECK(accuracy_reward(wrong, inst, {std::make_shared<FixedVerifier>(1)}) == 1);   // rule 0, ext 1
}

TEST_CASE("accuracy reward monotone in verifiers") {
    auto inst = instance_with_answer(3);
    auto toks = seq("ANS 4");
    std::vector<std::shared_ptr<VerifierClient>> clients;
    int prev = accuracy_reward(toks, inst, clients);
    for (int v : {0, 1, 0}) {
        clients.push_back(std::make_shared<FixedVerifier>(v));
        int cur = accuracy_reward(toks, inst, clients);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("combined reward arithmetic at eps 0.8") {
    auto inst = instance_with_answer(6);
    auto full = seq("THINK_OPEN 1 THINK_CLOSE ANS 6 EOS");
    auto fmt_only = seq("THINK_OPEN 1 THINK_CLOSE ANS 7 EOS");
    auto acc_only = seq("ANS 6");
    auto neither = seq("ANS 7");

    CHECK(combined_reward(full, inst, 0.8f).combined == doctest::Approx(1.0));
    CHECK(combined_reward(acc_only, inst, 0.8f).combined == doctest::Approx(0.8));
    CHECK(combined_reward(fmt_only, inst, 0.8f).combined == doctest::Approx(0.2));
    CHECK(combined_reward(neither, inst, 0.8f).combined == doctest::Approx(0.0));

    auto rb = combined_reward(full, inst, 0.8f);
    CHECK(rb.combined == doctest::Approx(rb.mix_weight * rb.accuracy + (1 - rb.mix_weight) * rb.format));
    CHECK_THROWS(combined_reward(full, inst, 1.5f));
}

TEST_CASE("external verifier over a subprocess pipe") {
    // echo a score of 1 when predicted == truth, else 0
    const char * script =
        "python3 -c \""
        "import sys, json\n"
        "for line in sys.stdin:\n"
        "    r = json.loads(line)\n"
        "    print(json.dumps({'score': 1 if r['predicted'] == r['truth'] else 0}), flush=True)\n"
        "\"";
    ExternalVerifier ev(script);
    CHECK(ev.score("6", "6") == 1);
    CHECK(ev.score("5", "6") == 0);
    CHECK(ev.score("6", "6") == 1); // persistent across calls
}

TEST_CASE("external verifier failure degrades to 0") {
    ExternalVerifier ev("false", 0.5);
    CHECK(ev.score("6", "6") == 0);
}
