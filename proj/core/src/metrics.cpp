#include "skrl/metrics.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace skrl {

std::string MetricsRecord::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["index"] = index;
    j["wall_clock_s"] = wall_clock_s;
    j["mean_reward"] = mean_reward;
    j["mean_accuracy"] = mean_accuracy;
    j["mean_format"] = mean_format;
    j["mean_entropy"] = mean_entropy;
    if (critical_entropy) {
        j["critical_entropy"] = *critical_entropy;
    } else {
        j["critical_entropy"] = nullptr;
    }
    if (tail_prob) {
        j["tail_prob"] = *tail_prob;
    } else {
        j["tail_prob"] = nullptr;
    }
    j["tail_tau"] = tail_tau;
    j["kept_fraction"] = kept_fraction;
    j["learning_rate"] = learning_rate;
    j["loss"] = loss;
    for (const auto & [k, v] : extra) {
        j[k] = v;
    }
    return j.dump();
}

void MetricsLogger::log(MetricsRecord rec) {
    if (path_.empty()) {
        return;
    }
    if (zero_wall_clock_) {
        rec.wall_clock_s = 0.0;
    }
    std::ofstream f(path_, std::ios::app);
    if (!f) {
        throw std::runtime_error("metrics: cannot open " + path_);
    }
    f << rec.to_json() << "\n";
}

} // namespace skrl
