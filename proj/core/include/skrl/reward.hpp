#pragma once

#include "skrl/taskgen.hpp"
#include "skrl/vocab.hpp"

#include <memory>
#include <string>
#include <vector>

namespace skrl {

struct RewardBreakdown {
    int format = 0;   // {0,1}
    int accuracy = 0; // {0,1}
    float combined = 0.0f;
    float mix_weight = 0.8f; // the accuracy/format mix, config key reward_mix_accuracy
};

// (predicted answer digits, ground truth) -> {0,1}
class VerifierClient {
  public:
    virtual ~VerifierClient() = default;
    virtual int score(const std::string & predicted, const std::string & truth) = 0;
    virtual std::string name() const = 0;
};

class RuleVerifier : public VerifierClient {
  public:
    int score(const std::string & predicted, const std::string & truth) override;
    std::string name() const override { return "rule"; }
};

// line-delimited JSON over a subprocess pipe:
//   request  {"predicted":"...","truth":"..."}
//   response {"score":0|1}
// failures and timeouts degrade to score 0 with a warning on stderr
class ExternalVerifier : public VerifierClient {
  public:
    explicit ExternalVerifier(const std::string & command, double timeout_s = 2.0);
    ~ExternalVerifier() override;

    int score(const std::string & predicted, const std::string & truth) override;
    std::string name() const override { return "external"; }

  private:
    void launch();
    void shutdown();

    std::string command_;
    double timeout_s_;
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
};

// 1 iff: optional BOS, THINK_OPEN, >=0 non-structural tokens, THINK_CLOSE,
// ANS, >=1 digits, EOS; exactly one think block
int format_reward(const std::vector<int> & tokens);

// digits after the last ANS, parsed base-10, compared to the oracle answer
int rule_accuracy(const std::vector<int> & tokens, const TaskInstance & inst);

// OR over all configured verifiers (rule verifier always first)
int accuracy_reward(const std::vector<int> & tokens, const TaskInstance & inst,
                    const std::vector<std::shared_ptr<VerifierClient>> & clients);

RewardBreakdown combined_reward(const std::vector<int> & tokens, const TaskInstance & inst,
                                float mix_weight = 0.8f,
                                const std::vector<std::shared_ptr<VerifierClient>> & extra_clients = {});

// extract the digit run after the last ANS token; empty when absent/unparseable
std::string extract_answer(const std::vector<int> & tokens);

} // namespace skrl
