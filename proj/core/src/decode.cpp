#include "skrl/decode.hpp"

#include "skrl/reward.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <thread>

namespace skrl {

const char * decode_mode_name(DecodeModeKind k) {
    switch (k) {
        case DecodeModeKind::Slow: return "slow";
        case DecodeModeKind::NoThink: return "nothink";
        case DecodeModeKind::NoWait: return "nowait";
        case DecodeModeKind::Budget: return "budget";
    }
    throw contract_error("decode_mode_name: bad kind");
}

DecodeModeKind decode_mode_from_name(const std::string & s) {
    if (s == "slow") return DecodeModeKind::Slow;
    if (s == "nothink") return DecodeModeKind::NoThink;
    if (s == "nowait") return DecodeModeKind::NoWait;
    if (s == "budget") return DecodeModeKind::Budget;
    throw config_error("unknown decode mode: " + s);
}

static SampleControls mode_controls(const DecodeMode & mode) {
    SampleControls ctl;
    ctl.temperature = mode.temperature;
    switch (mode.kind) {
        case DecodeModeKind::Slow:
            ctl.force_first_token = tok::THINK_OPEN;
            break;
        case DecodeModeKind::NoThink:
            // template-level removal of the think block: the structural pair
            // is never reachable, so the answer path starts immediately
            ctl.banned = {tok::THINK_OPEN, tok::THINK_CLOSE};
            break;
        case DecodeModeKind::NoWait:
            ctl.force_first_token = tok::THINK_OPEN;
            ctl.banned = mode.banned;
            break;
        case DecodeModeKind::Budget:
            if (mode.budget < 0) {
                throw config_error("decode: negative thinking budget");
            }
            ctl.force_first_token = tok::THINK_OPEN;
            ctl.think_budget = mode.budget == BUDGET_UNLIMITED ? -1 : mode.budget;
            break;
    }
    return ctl;
}

DecodeResult decode(const Policy & policy, const TaskInstance & inst, const DecodeMode & mode,
                    uint64_t seed, float reward_mix) {
    Rollout r = policy.sample_sequence(inst, mode_controls(mode), seed);
    DecodeResult out;
    out.tokens = r.tokens;
    out.entropies = r.entropies;
    out.total_len = (int) r.tokens.size();
    // only the first think block counts, matching the sampler's budget state
    bool in_think = false;
    bool think_done = false;
    for (int t : r.tokens) {
        if (t == tok::THINK_OPEN) {
            if (!think_done) {
                in_think = true;
            }
        } else if (t == tok::THINK_CLOSE) {
            if (in_think) {
                in_think = false;
                think_done = true;
            }
        } else if (in_think) {
            out.think_len++;
        }
    }
    out.reward = combined_reward(r.tokens, inst, reward_mix);
    return out;
}

std::vector<ModeEvalRow> eval_modes(const Policy & policy, const std::vector<TaskInstance> & dataset,
                                    const std::vector<DecodeMode> & modes,
                                    const std::vector<uint64_t> & seeds, float reward_mix,
                                    int workers) {
    if (dataset.empty()) {
        throw contract_error("eval_modes: empty dataset");
    }
    std::vector<ModeEvalRow> rows;
    for (const auto & mode : modes) {
        for (uint64_t seed : seeds) {
            // one stream per seed, shared across modes: paired comparisons
            const Rng stream = Rng(seed).split(0xdec0de);
            std::vector<double> acc(dataset.size()), len(dataset.size());
            auto work = [&](size_t lo, size_t hi) {
                for (size_t i = lo; i < hi; ++i) {
                    DecodeResult dr = decode(policy, dataset[i], mode,
                                             stream.split(i).next_u64(), reward_mix);
                    acc[i] = dr.reward.accuracy;
                    len[i] = dr.total_len;
                }
            };
            const int n_workers = std::max(1, std::min<int>(workers, (int) dataset.size()));
            if (n_workers == 1) {
                work(0, dataset.size());
            } else {
                std::vector<std::thread> threads;
                const size_t chunk = (dataset.size() + n_workers - 1) / n_workers;
                for (int w = 0; w < n_workers; ++w) {
                    const size_t lo = w * chunk, hi = std::min(dataset.size(), lo + chunk);
                    if (lo < hi) {
                        threads.emplace_back(work, lo, hi);
                    }
                }
                for (auto & t : threads) {
                    t.join();
                }
            }
            ModeEvalRow row;
            row.mode = decode_mode_name(mode.kind);
            row.budget = mode.kind == DecodeModeKind::Budget && mode.budget != BUDGET_UNLIMITED
                                 ? mode.budget
                                 : 0;
            row.seed = seed;
            for (size_t i = 0; i < dataset.size(); ++i) {
                row.accuracy += acc[i];
                row.mean_length += len[i];
            }
            row.accuracy /= dataset.size();
            row.mean_length /= dataset.size();
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string modes_csv(const std::vector<ModeEvalRow> & rows) {
    std::ostringstream os;
    os << "mode,budget,seed,accuracy,mean_length\n";
    for (const auto & r : rows) {
        os << r.mode << "," << r.budget << "," << r.seed << "," << r.accuracy << ","
           << r.mean_length << "\n";
    }
    return os.str();
}

std::vector<ModeSummary> summarize_modes(const std::vector<ModeEvalRow> & rows) {
    std::vector<ModeSummary> out;
    std::map<std::pair<std::string, int>, size_t> index;
    std::map<std::pair<std::string, int>, int> counts;
    for (const auto & r : rows) {
        auto key = std::make_pair(r.mode, r.budget);
        if (!index.count(key)) {
            index[key] = out.size();
            out.push_back({r.mode, r.budget, 0.0, 0.0});
        }
        ModeSummary & s = out[index[key]];
        s.accuracy += r.accuracy;
        s.mean_length += r.mean_length;
        counts[key]++;
    }
    for (auto & s : out) {
        const int n = counts[{s.mode, s.budget}];
        s.accuracy /= n;
        s.mean_length /= n;
    }
    return out;
}

} // namespace skrl
