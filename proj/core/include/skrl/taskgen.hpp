#pragma once

#include "skrl/rng.hpp"
#include "skrl/vocab.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skrl {

struct length_error_skrl : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Tier { Normal, Hard };
enum class Domain { math, countB };

const char * tier_name(Tier t);
const char * domain_name(Domain d);
Tier tier_from_name(const std::string & s);
Domain domain_from_name(const std::string & s);

struct TierMix {
    double normal = 1.0;
    double hard = 0.0;
};

struct TaskGenConfig {
    int grid_h = 3;
    int grid_w = 3;
    double p_wait = 0.5;    // chance a teacher trace carries a deliberative re-check segment
    double p_nothink = 0.0; // chance a teacher trace answers directly, with no think block
    int max_seq_len = 64;
};

struct TaskInstance {
    std::vector<std::vector<int>> grid; // H×W digits 0..9
    std::vector<int> question;          // token ids
    int answer = 0;
    Tier tier = Tier::Normal;
    Domain domain = Domain::math;
    uint64_t seed = 0;
};

struct TeacherTrace {
    std::vector<int> tokens; // THINK_OPEN ... THINK_CLOSE ANS digits EOS
};

// evaluate a question against a grid; this is the generator's own evaluator,
// tests recheck it with an independent brute-force oracle
int eval_question(const std::vector<std::vector<int>> & grid, const std::vector<int> & question);

TaskInstance gen_instance(uint64_t seed, Tier tier, Domain domain, const TaskGenConfig & cfg = {});

std::vector<TaskInstance> gen_dataset(uint64_t seed, int size, const TierMix & mix, Domain domain,
                                      const TaskGenConfig & cfg = {});

TeacherTrace teacher_trace(const TaskInstance & inst, uint64_t seed, const TaskGenConfig & cfg = {});

// one JSON object per line: {grid, question_tokens, answer, tier, domain, seed}
std::string instance_to_json(const TaskInstance & inst);
void export_dataset(const std::vector<TaskInstance> & ds, const std::string & path);

} // namespace skrl
