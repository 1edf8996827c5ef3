#include "skrl/rl.hpp"

#include "skrl/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace skrl {

std::pair<std::vector<float>, bool> group_advantages(const std::vector<float> & rewards, float delta) {
    if (rewards.size() < 2) {
        throw config_error("group_advantages: need at least 2 rewards per group");
    }
    double mean = 0.0;
    for (float r : rewards) {
        mean += r;
    }
    mean /= rewards.size();
    double var = 0.0;
    for (float r : rewards) {
        var += (r - mean) * (r - mean);
    }
    var /= rewards.size(); // population variance
    const double sd = std::sqrt(var);
    const bool kept = sd >= delta;
    std::vector<float> adv(rewards.size());
    const double denom = std::max(sd, (double) delta);
    for (size_t j = 0; j < rewards.size(); ++j) {
        adv[j] = (float) ((rewards[j] - mean) / denom);
    }
    return {adv, kept};
}

float clipped_term(float rho, float adv, float clip_low, float clip_high) {
    const float clipped = std::clamp(rho, 1.0f - clip_low, 1.0f + clip_high);
    return std::min(rho * adv, clipped * adv);
}

float kl_term(float logp_theta, float logp_ref) {
    return logp_theta - logp_ref;
}

int dynamic_sample_filter(std::vector<RolloutGroup> & groups) {
    int removed = 0;
    for (auto & g : groups) {
        std::vector<float> rewards;
        for (const auto & r : g.rollouts) {
            rewards.push_back(r.reward.combined);
        }
        auto [adv, kept] = group_advantages(rewards);
        g.advantages = adv;
        g.kept = kept;
        if (!kept) {
            removed++;
        }
    }
    return removed;
}

TierMix curriculum_schedule(int episode, const RLConfig & cfg) {
    if (cfg.curriculum.empty()) {
        throw config_error("curriculum_schedule: empty schedule");
    }
    const TierMix * mix = nullptr;
    for (const auto & st : cfg.curriculum) {
        if (st.start_episode <= episode) {
            mix = &st.mix;
        }
    }
    if (mix == nullptr) {
        // before the first stage boundary: use the first stage
        mix = &cfg.curriculum.front().mix;
    }
    return *mix;
}

// per-step log-probs of an already-sampled continuation under another policy
static std::vector<float> sequence_logprobs(const Policy & p, const TaskInstance & inst,
                                            const Rollout & r) {
    Policy::Session s(p, inst);
    for (int t : r.prompt) {
        s.feed(t);
    }
    std::vector<float> out;
    out.reserve(r.tokens.size());
    for (int g : r.tokens) {
        const std::vector<float> & raw = s.logits();
        float mx = *std::max_element(raw.begin(), raw.end());
        double z = 0.0;
        for (float l : raw) {
            z += std::exp((double) l - mx);
        }
        out.push_back((float) ((double) raw[g] - mx - std::log(z)));
        s.feed(g);
    }
    return out;
}

// log-probs through the training forward path (bit-identical to what
// grpo_loss recomputes, unlike the KV-cache sampling path)
static std::vector<float> tape_logprobs(const Policy & policy, const TaskInstance & inst,
                                        const Rollout & r) {
    Tape tape;
    TapeLeaves lv = policy.make_leaves(tape);
    std::vector<int> toks = r.prompt;
    toks.insert(toks.end(), r.tokens.begin(), r.tokens.end());
    ops::NodeId logits = policy.forward_logits_tape(tape, lv, inst, toks);
    ops::NodeId lp_all = ops::log_softmax_rows(tape, logits);
    const int k = policy.config().n_percept;
    ops::NodeId lp_rows = ops::slice_rows(tape, lp_all, k + (int) r.prompt.size() - 1,
                                          (int) r.tokens.size());
    ops::NodeId lp = ops::pick(tape, lp_rows, r.tokens);
    return tape.value(lp).data;
}

GrpoLossStats grpo_loss(Policy & policy, const std::vector<TaskInstance> & prompts,
                        const std::vector<RolloutGroup> & groups,
                        const ReferencePolicy * reference, const RLConfig & cfg) {
    int n_kept = 0;
    for (const auto & g : groups) {
        if (g.kept) {
            n_kept++;
        }
    }
    if (n_kept == 0) {
        throw empty_batch_error("grpo_loss: zero kept groups");
    }
    if (cfg.kl_beta != 0.0f && reference == nullptr) {
        throw config_error("grpo_loss: kl_beta > 0 needs a reference policy");
    }

    Tape tape;
    TapeLeaves lv = policy.make_leaves(tape);
    const int k = policy.config().n_percept;

    GrpoLossStats stats;
    std::vector<ops::NodeId> terms;
    double const_obj = 0.0; // objective pieces with zero gradient (clipped branches)

    for (const auto & g : groups) {
        if (!g.kept) {
            continue;
        }
        const TaskInstance & inst = prompts.at(g.prompt_index);
        const double group_coeff = 1.0 / ((double) n_kept * g.rollouts.size());
        for (size_t j = 0; j < g.rollouts.size(); ++j) {
            const Rollout & r = g.rollouts[j];
            const int T = (int) r.tokens.size();
            if (T == 0) {
                continue;
            }
            const float A = g.advantages.at(j);
            const double coeff = group_coeff / T;

            std::vector<int> toks = r.prompt;
            toks.insert(toks.end(), r.tokens.begin(), r.tokens.end());
            ops::NodeId logits = policy.forward_logits_tape(tape, lv, inst, toks);
            ops::NodeId lp_all = ops::log_softmax_rows(tape, logits);
            // row k + prompt_len - 1 + t predicts generated token t
            ops::NodeId lp_rows = ops::slice_rows(tape, lp_all, k + (int) r.prompt.size() - 1, T);
            ops::NodeId lp = ops::pick(tape, lp_rows, r.tokens);

            Tensor neg_old({T});
            for (int t = 0; t < T; ++t) {
                neg_old.data[t] = -r.logprobs[t];
            }
            ops::NodeId rho = ops::exp_op(tape, ops::add_const(tape, lp, std::move(neg_old)));

            const Tensor & rho_v = tape.value(rho);
            Tensor w_flow({T});
            bool any_flow = false;
            for (int t = 0; t < T; ++t) {
                const float rv = rho_v.data[t];
                stats.ratios.push_back(rv);
                const float unclipped = rv * A;
                const float clipped = std::clamp(rv, 1.0f - cfg.clip_low, 1.0f + cfg.clip_high) * A;
                if (unclipped <= clipped) {
                    w_flow.data[t] = (float) (coeff * A);
                    any_flow = any_flow || A != 0.0f;
                } else {
                    w_flow.data[t] = 0.0f;
                    const_obj += coeff * clipped;
                }
            }
            stats.n_tokens += T;
            if (any_flow) {
                terms.push_back(ops::weighted_sum(tape, rho, std::move(w_flow)));
            }

            if (cfg.kl_beta != 0.0f) {
                std::vector<float> lp_ref = sequence_logprobs(reference->ref(), inst, r);
                Tensor w_kl({T});
                for (int t = 0; t < T; ++t) {
                    w_kl.data[t] = (float) (-cfg.kl_beta * coeff);
                    const_obj += cfg.kl_beta * coeff * lp_ref[t];
                }
                terms.push_back(ops::weighted_sum(tape, lp, std::move(w_kl)));
            }
        }
    }

    double obj = const_obj;
    if (!terms.empty()) {
        ops::NodeId total = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) {
            total = ops::add(tape, total, terms[i]);
        }
        obj += tape.value(total).data[0];
        ops::NodeId loss_node = ops::scale(tape, total, -1.0f);
        tape.backward(loss_node);
        policy.accumulate_grads(tape, lv);
    }
    stats.loss = (float) -obj;
    return stats;
}

static std::pair<TaskInstance, RolloutGroup> sample_one_group(const Policy & policy,
                                                              const RLConfig & cfg,
                                                              const TierMix & mix,
                                                              const Rng & episode_stream,
                                                              int prompt_index, int max_new) {
    Rng prng = episode_stream.split((uint64_t) prompt_index);
    if (mix.normal + mix.hard <= 0.0f) {
        throw config_error("tier mix must have positive total weight");
    }
    const float p_normal = mix.normal / (mix.normal + mix.hard);
    const Tier tier = prng.next_double() < p_normal ? Tier::Normal : Tier::Hard;
    TaskInstance inst = gen_instance(prng.next_u64(), tier, cfg.domain, cfg.taskgen);

    SampleControls ctl;
    ctl.temperature = cfg.temperature;
    ctl.max_new_tokens = max_new;

    RolloutGroup group;
    group.prompt_index = (size_t) prompt_index;
    for (int j = 0; j < cfg.group_size; ++j) {
        Rollout r = policy.sample_sequence(inst, ctl, prng.split((uint64_t) j + 1).next_u64());
        r.reward = cfg.reward_fn ? cfg.reward_fn(r.tokens, inst)
                                 : combined_reward(r.tokens, inst, cfg.reward_mix, cfg.extra_verifiers);
        group.rollouts.push_back(std::move(r));
    }
    std::vector<float> rewards;
    for (const auto & r : group.rollouts) {
        rewards.push_back(r.reward.combined);
    }
    auto [adv, kept] = group_advantages(rewards);
    group.advantages = adv;
    group.kept = kept;
    return {std::move(inst), std::move(group)};
}

// parallel across prompts with preassigned seed streams: thread count never
// changes the result
static void sample_groups(const Policy & policy, const RLConfig & cfg, const TierMix & mix,
                          const Rng & episode_stream, int first_index, int count, int max_new,
                          std::vector<TaskInstance> & prompts, std::vector<RolloutGroup> & groups) {
    const size_t base = prompts.size();
    prompts.resize(base + count);
    groups.resize(base + count);
    auto work = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            auto [inst, group] = sample_one_group(policy, cfg, mix, episode_stream,
                                                  first_index + i, max_new);
            group.prompt_index = base + i;
            prompts[base + i] = std::move(inst);
            groups[base + i] = std::move(group);
        }
    };
    const int n_workers = std::max(1, std::min(cfg.workers, count));
    if (n_workers == 1) {
        work(0, count);
    } else {
        std::vector<std::thread> threads;
        const int chunk = (count + n_workers - 1) / n_workers;
        for (int w = 0; w < n_workers; ++w) {
            const int lo = w * chunk, hi = std::min(count, lo + chunk);
            if (lo < hi) {
                threads.emplace_back(work, lo, hi);
            }
        }
        for (auto & t : threads) {
            t.join();
        }
    }
}

EpisodeResult run_episode(Policy & policy, ReferencePolicy & reference, const RLConfig & cfg,
                          int episode, uint64_t seed) {
    if (cfg.group_size < 2) {
        throw config_error("run_episode: group_size must be >= 2");
    }
    if (cfg.rollouts_per_episode % cfg.group_size != 0) {
        throw config_error("run_episode: rollouts_per_episode must be divisible by group_size");
    }
    const auto t0 = std::chrono::steady_clock::now();

    reference.refresh_old(policy);
    const TierMix mix = curriculum_schedule(episode, cfg);
    int max_new = cfg.max_new_tokens;
    if (cfg.long_rollout_episode >= 0 && episode >= cfg.long_rollout_episode) {
        max_new = cfg.long_max_new_tokens;
    }

    const Rng episode_stream = Rng(seed).split((uint64_t) episode);
    const int n_prompts = cfg.n_prompts();

    EpisodeResult out;
    sample_groups(policy, cfg, mix, episode_stream, 0, n_prompts, max_new,
                  out.prompts, out.groups);

    if (cfg.dynamic_sampling) {
        int next_index = n_prompts;
        for (int round = 0; round < cfg.max_refills; ++round) {
            int degenerate = 0;
            for (const auto & g : out.groups) {
                if (!g.kept) {
                    degenerate++;
                }
            }
            if (degenerate == 0) {
                break;
            }
            sample_groups(policy, cfg, mix, episode_stream, next_index, degenerate, max_new,
                          out.prompts, out.groups);
            next_index += degenerate;
        }
    }

    std::vector<const RolloutGroup *> kept;
    for (auto & g : out.groups) {
        if (g.kept) {
            kept.push_back(&g);
        }
    }
    // a fully degenerate episode (every group zero-variance even after
    // refills) carries no learning signal: skip the update, keep telemetry
    // re-score behavior log-probs through the training forward path so the
    // first update's importance ratios are exactly 1
    for (auto & g : out.groups) {
        if (!g.kept) {
            continue;
        }
        for (auto & r : g.rollouts) {
            if (!r.tokens.empty()) {
                r.logprobs = tape_logprobs(policy, out.prompts[g.prompt_index], r);
            }
        }
    }

    // split the kept batch across the configured number of updates; one update
    // over the full batch keeps every ratio at exactly 1
    const int n_steps = std::max(1, cfg.grad_steps_per_episode);
    const int per_step = ((int) kept.size() + n_steps - 1) / n_steps;
    double loss_sum = 0.0;
    double ratio_dev = 0.0;
    int64_t ratio_n = 0;
    int steps_taken = 0;
    for (int s = 0; s < n_steps; ++s) {
        const int lo = s * per_step;
        const int hi = std::min((int) kept.size(), lo + per_step);
        if (lo >= hi) {
            break;
        }
        std::vector<RolloutGroup> batch;
        for (int i = lo; i < hi; ++i) {
            batch.push_back(*kept[i]);
        }
        policy.params().zero_grad();
        GrpoLossStats st = grpo_loss(policy, out.prompts, batch, &reference, cfg);
        policy.params().step(cfg.optimizer);
        loss_sum += st.loss;
        for (float rho : st.ratios) {
            ratio_dev = std::max(ratio_dev, (double) std::fabs(rho - 1.0f));
        }
        ratio_n += (int64_t) st.ratios.size();
        steps_taken++;
    }

    // telemetry over every sampled rollout, kept or not
    std::vector<Rollout> all;
    std::vector<float> entropies;
    double rsum = 0, asum = 0, fsum = 0;
    for (const auto & g : out.groups) {
        for (const auto & r : g.rollouts) {
            rsum += r.reward.combined;
            asum += r.reward.accuracy;
            fsum += r.reward.format;
            entropies.insert(entropies.end(), r.entropies.begin(), r.entropies.end());
            all.push_back(r);
        }
    }
    const double n_roll = (double) all.size();
    const double tau = cfg.tail_tau >= 0 ? cfg.tail_tau
                                         : default_tail_threshold(policy.config().vocab_size);

    MetricsRecord & m = out.metrics;
    m.stage = "rl";
    m.index = episode;
    m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.mean_reward = rsum / n_roll;
    m.mean_accuracy = asum / n_roll;
    m.mean_format = fsum / n_roll;
    double esum = 0;
    for (float h : entropies) {
        esum += h;
    }
    m.mean_entropy = entropies.empty() ? 0.0 : esum / entropies.size();
    m.critical_entropy = critical_token_entropy(all, cfg.critical_lexicon);
    m.tail_prob = high_entropy_tail(entropies, tau);
    m.tail_tau = tau;
    m.kept_fraction = (double) kept.size() / (double) out.groups.size();
    m.learning_rate = cfg.optimizer.lr;
    m.loss = steps_taken > 0 ? loss_sum / steps_taken : 0.0;
    m.extra["max_ratio_dev"] = ratio_dev;
    m.extra["n_ratio_tokens"] = (double) ratio_n;
    double len_sum = 0;
    for (const auto & r : all) {
        len_sum += (double) r.tokens.size();
    }
    m.extra["mean_length"] = len_sum / n_roll;
    return out;
}

} // namespace skrl
