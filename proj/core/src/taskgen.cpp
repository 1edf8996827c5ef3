#include "skrl/taskgen.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace skrl {

const char * tier_name(Tier t) { return t == Tier::Normal ? "Normal" : "Hard"; }
const char * domain_name(Domain d) { return d == Domain::math ? "math" : "countB"; }

Tier tier_from_name(const std::string & s) {
    if (s == "Normal") return Tier::Normal;
    if (s == "Hard")   return Tier::Hard;
    throw std::invalid_argument("unknown tier: " + s);
}

Domain domain_from_name(const std::string & s) {
    if (s == "math")   return Domain::math;
    if (s == "countB") return Domain::countB;
    throw std::invalid_argument("unknown domain: " + s);
}

static std::vector<int> line_values(const std::vector<std::vector<int>> & grid, int axis_tok, int idx) {
    std::vector<int> vals;
    if (axis_tok == tok::ROW) {
        if (idx < 0 || idx >= (int) grid.size()) {
            throw std::invalid_argument("row index out of range");
        }
        vals = grid[idx];
    } else {
        if (idx < 0 || grid.empty() || idx >= (int) grid[0].size()) {
            throw std::invalid_argument("col index out of range");
        }
        for (const auto & row : grid) {
            vals.push_back(row[idx]);
        }
    }
    return vals;
}

// evaluate one clause starting at position p, advancing p past it
static int eval_clause(const std::vector<std::vector<int>> & grid, const std::vector<int> & q, size_t & p) {
    if (p >= q.size()) {
        throw std::invalid_argument("empty question clause");
    }
    const int op = q[p];
    if (op == tok::CNT) {
        if (p + 1 >= q.size() || !Vocab::is_digit(q[p + 1])) {
            throw std::invalid_argument("CNT needs a digit argument");
        }
        const int b = Vocab::digit_value(q[p + 1]);
        p += 2;
        int c = 0;
        for (const auto & row : grid) {
            for (int v : row) {
                c += (v == b) ? 1 : 0;
            }
        }
        return c;
    }
    if (op == tok::SUM || op == tok::MAX || op == tok::PROD) {
        if (p + 2 >= q.size()) {
            throw std::invalid_argument("operator needs axis and index");
        }
        const int axis = q[p + 1];
        const int idx = q[p + 2] - tok::IDX0;
        p += 3;
        std::vector<int> vals = line_values(grid, axis, idx);
        if (op == tok::SUM) {
            int s = 0;
            for (int v : vals) s += v;
            return s;
        }
        if (op == tok::MAX) {
            return *std::max_element(vals.begin(), vals.end());
        }
        int prod = 1;
        for (int v : vals) prod *= v;
        return prod;
    }
    throw std::invalid_argument("unknown question operator: " + Vocab::name(op));
}

int eval_question(const std::vector<std::vector<int>> & grid, const std::vector<int> & question) {
    size_t p = 0;
    int result = eval_clause(grid, question, p);
    while (p < question.size()) {
        if (question[p] != tok::PLUS) {
            throw std::invalid_argument("expected PLUS between clauses");
        }
        ++p;
        result += eval_clause(grid, question, p);
    }
    return result;
}

TaskInstance gen_instance(uint64_t seed, Tier tier, Domain domain, const TaskGenConfig & cfg) {
    Rng rng(seed ^ 0x5f3759df);
    TaskInstance inst;
    inst.seed = seed;
    inst.tier = tier;
    inst.domain = domain;
    inst.grid.assign(cfg.grid_h, std::vector<int>(cfg.grid_w, 0));
    for (auto & row : inst.grid) {
        for (int & v : row) {
            v = rng.next_int(10);
        }
    }
    const int n_idx = std::min(tok::NUM_IDX, std::max(cfg.grid_h, cfg.grid_w));
    auto rand_axis_idx = [&](int & axis, int & idx) {
        axis = rng.next_int(2) == 0 ? tok::ROW : tok::COL;
        const int limit = axis == tok::ROW ? cfg.grid_h : cfg.grid_w;
        idx = rng.next_int(std::min(limit, n_idx));
    };

    if (domain == Domain::countB) {
        if (tier == Tier::Normal) {
            inst.question = {tok::CNT, Vocab::digit(rng.next_int(10))};
        } else {
            inst.question = {tok::CNT, Vocab::digit(rng.next_int(10)), tok::PLUS,
                             tok::CNT, Vocab::digit(rng.next_int(10))};
        }
    } else if (tier == Tier::Normal) {
        const int op = rng.next_int(2) == 0 ? tok::SUM : tok::MAX;
        int axis, idx;
        rand_axis_idx(axis, idx);
        inst.question = {op, axis, Vocab::idx(idx)};
    } else {
        // Hard math: PROD over a line, or a two-clause SUM composition
        if (rng.next_int(2) == 0) {
            int axis, idx;
            rand_axis_idx(axis, idx);
            inst.question = {tok::PROD, axis, Vocab::idx(idx)};
        } else {
            int axis1, idx1, axis2, idx2;
            rand_axis_idx(axis1, idx1);
            rand_axis_idx(axis2, idx2);
            inst.question = {tok::SUM, axis1, Vocab::idx(idx1), tok::PLUS,
                             tok::SUM, axis2, Vocab::idx(idx2)};
        }
    }
    inst.answer = eval_question(inst.grid, inst.question);
    return inst;
}

std::vector<TaskInstance> gen_dataset(uint64_t seed, int size, const TierMix & mix, Domain domain,
                                      const TaskGenConfig & cfg) {
    if (size <= 0) {
        throw std::invalid_argument("gen_dataset: size must be positive");
    }
    const double total = mix.normal + mix.hard;
    if (total <= 0.0) {
        throw std::invalid_argument("gen_dataset: tier mix sums to zero");
    }
    Rng rng(seed);
    std::vector<TaskInstance> ds;
    ds.reserve(size);
    for (int i = 0; i < size; ++i) {
        Rng child = rng.split((uint64_t) i);
        const Tier tier = child.next_double() * total < mix.normal ? Tier::Normal : Tier::Hard;
        ds.push_back(gen_instance(child.next_u64(), tier, domain, cfg));
    }
    return ds;
}

namespace {

// digits(a) OP digits(b) EQ digits(acc) OP digits(c) EQ digits(acc2) ...
void append_chain(std::vector<int> & out, const std::vector<int> & vals, int op_tok) {
    out.push_back(Vocab::digit(vals[0]));
    long acc = vals[0];
    for (size_t i = 1; i < vals.size(); ++i) {
        out.push_back(op_tok);
        out.push_back(Vocab::digit(vals[i]));
        out.push_back(tok::EQ);
        acc = op_tok == tok::PLUS ? acc + vals[i] : acc * vals[i];
        for (int d : digits_of((int) acc)) {
            out.push_back(d);
        }
    }
}

void append_max(std::vector<int> & out, const std::vector<int> & vals) {
    for (int v : vals) {
        out.push_back(Vocab::digit(v));
    }
    out.push_back(tok::MAX);
    out.push_back(tok::EQ);
    out.push_back(Vocab::digit(*std::max_element(vals.begin(), vals.end())));
}

void append_count(std::vector<int> & out, const std::vector<std::vector<int>> & grid, int b) {
    out.push_back(Vocab::digit(0));
    int c = 0;
    for (const auto & row : grid) {
        for (int v : row) {
            if (v == b) {
                out.push_back(tok::PLUS);
                out.push_back(Vocab::digit(1));
                out.push_back(tok::EQ);
                ++c;
                for (int d : digits_of(c)) {
                    out.push_back(d);
                }
            }
        }
    }
}

// one clause of a question, appended to the think body; returns clause value
int append_clause(std::vector<int> & out, const TaskInstance & inst, const std::vector<int> & q, size_t & p) {
    size_t p0 = p;
    const int value = eval_clause(inst.grid, q, p);
    const int op = q[p0];
    if (op == tok::CNT) {
        append_count(out, inst.grid, Vocab::digit_value(q[p0 + 1]));
    } else {
        std::vector<int> vals = line_values(inst.grid, q[p0 + 1], q[p0 + 2] - tok::IDX0);
        if (op == tok::SUM) {
            append_chain(out, vals, tok::PLUS);
        } else if (op == tok::PROD) {
            append_chain(out, vals, tok::TIMES);
        } else {
            append_max(out, vals);
        }
    }
    return value;
}

} // namespace

TeacherTrace teacher_trace(const TaskInstance & inst, uint64_t seed, const TaskGenConfig & cfg) {
    Rng rng(seed ^ 0xabcdef);
    // direct-answer traces keep the fast-thinking decode mode in-distribution;
    // the coin comes from a split stream so p_nothink = 0 leaves old traces intact
    if (cfg.p_nothink > 0.0 && rng.split(0x17).next_double() < cfg.p_nothink) {
        TeacherTrace tr;
        tr.tokens.push_back(tok::ANS);
        for (int d : digits_of(inst.answer)) tr.tokens.push_back(d);
        tr.tokens.push_back(tok::EOS);
        return tr;
    }
    std::vector<int> body;
    size_t p = 0;
    std::vector<int> clause_values;
    clause_values.push_back(append_clause(body, inst, inst.question, p));
    while (p < inst.question.size()) {
        ++p; // PLUS
        clause_values.push_back(append_clause(body, inst, inst.question, p));
    }
    if (clause_values.size() > 1) {
        // combine clause results: digits(v1) PLUS digits(v2) EQ digits(total)
        long acc = clause_values[0];
        for (int d : digits_of(clause_values[0])) body.push_back(d);
        for (size_t i = 1; i < clause_values.size(); ++i) {
            body.push_back(tok::PLUS);
            for (int d : digits_of(clause_values[i])) body.push_back(d);
            body.push_back(tok::EQ);
            acc += clause_values[i];
            for (int d : digits_of((int) acc)) body.push_back(d);
        }
    }

    std::vector<int> answer_digits = digits_of(inst.answer);

    // deliberative re-check: WAIT/ALT/HMM then "answer EQ answer"
    std::vector<int> recheck;
    if (rng.next_double() < cfg.p_wait) {
        const double u = rng.next_double();
        recheck.push_back(u < 0.6 ? tok::WAIT : (u < 0.8 ? tok::ALT : tok::HMM));
        recheck.insert(recheck.end(), answer_digits.begin(), answer_digits.end());
        recheck.push_back(tok::EQ);
        recheck.insert(recheck.end(), answer_digits.begin(), answer_digits.end());
    }

    auto assemble = [&](bool with_recheck) {
        TeacherTrace tr;
        tr.tokens.push_back(tok::THINK_OPEN);
        tr.tokens.insert(tr.tokens.end(), body.begin(), body.end());
        if (with_recheck) {
            tr.tokens.insert(tr.tokens.end(), recheck.begin(), recheck.end());
        }
        tr.tokens.push_back(tok::THINK_CLOSE);
        tr.tokens.push_back(tok::ANS);
        tr.tokens.insert(tr.tokens.end(), answer_digits.begin(), answer_digits.end());
        tr.tokens.push_back(tok::EOS);
        return tr;
    };

    const int prompt_len = 1 + (int) inst.question.size(); // BOS + question
    TeacherTrace tr = assemble(!recheck.empty());
    if (prompt_len + (int) tr.tokens.size() > cfg.max_seq_len) {
        tr = assemble(false); // drop the re-check before giving up
    }
    if (prompt_len + (int) tr.tokens.size() > cfg.max_seq_len) {
        throw length_error_skrl("teacher trace exceeds max sequence length");
    }
    return tr;
}

std::string instance_to_json(const TaskInstance & inst) {
    std::string s = "{\"grid\":[";
    for (size_t i = 0; i < inst.grid.size(); ++i) {
        if (i) s += ",";
        s += "[";
        for (size_t j = 0; j < inst.grid[i].size(); ++j) {
            if (j) s += ",";
            s += std::to_string(inst.grid[i][j]);
        }
        s += "]";
    }
    s += "],\"question_tokens\":[";
    for (size_t i = 0; i < inst.question.size(); ++i) {
        if (i) s += ",";
        s += "\"" + Vocab::name(inst.question[i]) + "\"";
    }
    s += "],\"answer\":" + std::to_string(inst.answer);
    s += ",\"tier\":\"" + std::string(tier_name(inst.tier)) + "\"";
    s += ",\"domain\":\"" + std::string(domain_name(inst.domain)) + "\"";
    s += ",\"seed\":" + std::to_string(inst.seed) + "}";
    return s;
}

void export_dataset(const std::vector<TaskInstance> & ds, const std::string & path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for write: " + path);
    }
    for (const TaskInstance & inst : ds) {
        f << instance_to_json(inst) << "\n";
    }
}

} // namespace skrl
