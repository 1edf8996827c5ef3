#include "skrl/reward.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <stdexcept>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace skrl {

int format_reward(const std::vector<int> & tokens) {
    size_t p = 0;
    const size_t n = tokens.size();
    if (p < n && tokens[p] == tok::BOS) {
        ++p;
    }
    if (p >= n || tokens[p] != tok::THINK_OPEN) {
        return 0;
    }
    ++p;
    while (p < n && !Vocab::is_structural(tokens[p])) {
        ++p;
    }
    if (p >= n || tokens[p] != tok::THINK_CLOSE) {
        return 0;
    }
    ++p;
    if (p >= n || tokens[p] != tok::ANS) {
        return 0;
    }
    ++p;
    size_t digits = 0;
    while (p < n && Vocab::is_digit(tokens[p])) {
        ++p;
        ++digits;
    }
    if (digits == 0) {
        return 0;
    }
    if (p >= n || tokens[p] != tok::EOS) {
        return 0;
    }
    return p + 1 == n ? 1 : 0;
}

std::string extract_answer(const std::vector<int> & tokens) {
    // find last ANS
    size_t ans = tokens.size();
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == tok::ANS) {
            ans = i;
        }
    }
    if (ans == tokens.size()) {
        return "";
    }
    std::string s;
    for (size_t i = ans + 1; i < tokens.size() && Vocab::is_digit(tokens[i]); ++i) {
        s += (char) ('0' + Vocab::digit_value(tokens[i]));
    }
    return s;
}

int RuleVerifier::score(const std::string & predicted, const std::string & truth) {
    if (predicted.empty()) {
        return 0;
    }
    // leading zeros accepted: compare numerically
    errno = 0;
    char * end1 = nullptr, * end2 = nullptr;
    const long a = strtol(predicted.c_str(), &end1, 10);
    const long b = strtol(truth.c_str(), &end2, 10);
    if (*end1 != '\0' || *end2 != '\0') {
        return 0;
    }
    return a == b ? 1 : 0;
}

int rule_accuracy(const std::vector<int> & tokens, const TaskInstance & inst) {
    RuleVerifier rv;
    return rv.score(extract_answer(tokens), std::to_string(inst.answer));
}

int accuracy_reward(const std::vector<int> & tokens, const TaskInstance & inst,
                    const std::vector<std::shared_ptr<VerifierClient>> & clients) {
    const std::string predicted = extract_answer(tokens);
    const std::string truth = std::to_string(inst.answer);
    RuleVerifier rule;
    if (rule.score(predicted, truth) == 1) {
        return 1;
    }
    for (const auto & c : clients) {
        if (c && c->score(predicted, truth) == 1) {
            return 1;
        }
    }
    return 0;
}

RewardBreakdown combined_reward(const std::vector<int> & tokens, const TaskInstance & inst,
                                float mix_weight,
                                const std::vector<std::shared_ptr<VerifierClient>> & extra_clients) {
    if (mix_weight < 0.0f || mix_weight > 1.0f) {
        throw std::invalid_argument("reward mix weight must be in [0,1]");
    }
    RewardBreakdown rb;
    rb.mix_weight = mix_weight;
    rb.format = format_reward(tokens);
    rb.accuracy = accuracy_reward(tokens, inst, extra_clients);
    rb.combined = mix_weight * (float) rb.accuracy + (1.0f - mix_weight) * (float) rb.format;
    return rb;
}

// ---- external verifier over a subprocess pipe ----

ExternalVerifier::ExternalVerifier(const std::string & command, double timeout_s)
    : command_(command), timeout_s_(timeout_s) {}

ExternalVerifier::~ExternalVerifier() {
    shutdown();
}

void ExternalVerifier::launch() {
    int in_pipe[2];  // parent -> child
    int out_pipe[2]; // child -> parent
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw std::runtime_error("external verifier: pipe() failed");
    }
    const pid_t pid = fork();
    if (pid < 0) {
        throw std::runtime_error("external verifier: fork() failed");
    }
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]); close(in_pipe[1]);
        close(out_pipe[0]); close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), (char *) nullptr);
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    child_pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

void ExternalVerifier::shutdown() {
    if (to_child_ >= 0)   { close(to_child_);   to_child_ = -1; }
    if (from_child_ >= 0) { close(from_child_); from_child_ = -1; }
    if (child_pid_ > 0) {
        kill(child_pid_, SIGTERM);
        waitpid(child_pid_, nullptr, 0);
        child_pid_ = -1;
    }
}

int ExternalVerifier::score(const std::string & predicted, const std::string & truth) {
    try {
        if (child_pid_ < 0) {
            launch();
        }
        nlohmann::json req{{"predicted", predicted}, {"truth", truth}};
        std::string line = req.dump() + "\n";
        if (write(to_child_, line.data(), line.size()) != (ssize_t) line.size()) {
            throw std::runtime_error("short write");
        }
        std::string resp;
        const int timeout_ms = (int) (timeout_s_ * 1000.0);
        while (true) {
            struct pollfd pfd{from_child_, POLLIN, 0};
            const int pr = poll(&pfd, 1, timeout_ms);
            if (pr <= 0) {
                throw std::runtime_error("timeout");
            }
            char buf[256];
            const ssize_t r = read(from_child_, buf, sizeof(buf));
            if (r <= 0) {
                throw std::runtime_error("pipe closed");
            }
            resp.append(buf, (size_t) r);
            const size_t nl = resp.find('\n');
            if (nl != std::string::npos) {
                resp.resize(nl);
                break;
            }
        }
        const auto j = nlohmann::json::parse(resp);
        return j.at("score").get<int>() == 1 ? 1 : 0;
    } catch (const std::exception & e) {
        fprintf(stderr, "warning: external verifier failed (%s), scoring 0\n", e.what());
        shutdown();
        return 0;
    }
}

} // namespace skrl
