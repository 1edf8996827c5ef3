#pragma once

#include <map>
#include <optional>
#include <string>

namespace skrl {

// one JSONL row of training/eval telemetry; keys are stable across versions
struct MetricsRecord {
    std::string stage;
    int index = 0;          // episode or epoch
    double wall_clock_s = 0.0;
    double mean_reward = 0.0;
    double mean_accuracy = 0.0;
    double mean_format = 0.0;
    double mean_entropy = 0.0;
    std::optional<double> critical_entropy;
    std::optional<double> tail_prob;
    double tail_tau = 0.0;
    double kept_fraction = 0.0;
    double learning_rate = 0.0;
    double loss = 0.0;
    std::map<std::string, double> extra; // per-tier eval accuracy, ratio stats, ...

    std::string to_json() const; // single line, no trailing newline
};

// appends one record per line; zero_wall_clock makes outputs byte-reproducible
class MetricsLogger {
  public:
    MetricsLogger() = default;
    MetricsLogger(std::string path, bool zero_wall_clock)
        : path_(std::move(path)), zero_wall_clock_(zero_wall_clock) {}

    void log(MetricsRecord rec);
    const std::string & path() const { return path_; }

  private:
    std::string path_;
    bool zero_wall_clock_ = false;
};

} // namespace skrl
