#include "skrl/sft.hpp"

#include "skrl/reward.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace skrl {

float cosine_lr(int step, int total_steps, float warmup_ratio, float base_lr) {
    if (base_lr <= 0.0f) {
        throw config_error("cosine_lr: learning rate must be positive");
    }
    if (warmup_ratio < 0.0f || warmup_ratio >= 1.0f) {
        throw config_error("cosine_lr: warmup ratio must be in [0, 1)");
    }
    if (total_steps <= 0 || step < 0 || step >= total_steps) {
        throw contract_error("cosine_lr: step out of range");
    }
    const int warmup_steps = (int) std::lround(warmup_ratio * total_steps);
    if (step < warmup_steps) {
        return base_lr * (float) (step + 1) / (float) warmup_steps;
    }
    const int decay_steps = total_steps - warmup_steps;
    if (decay_steps <= 1) {
        return base_lr;
    }
    const double t = (double) (step - warmup_steps) / (double) (decay_steps - 1);
    return (float) (base_lr * 0.5 * (1.0 + std::cos(t * M_PI)));
}

// tape loss over one batch: mean NLL of non-PAD target tokens, prompt masked
static float batch_loss(Policy & policy, const std::vector<SFTExample> & batch, bool update,
                        const SFTConfig * cfg, float lr) {
    if (batch.empty()) {
        throw contract_error("sft: empty batch");
    }
    const int k = policy.config().n_percept;

    int64_t n_tokens = 0;
    for (const auto & ex : batch) {
        for (int t : ex.target) {
            if (t != tok::PAD) {
                n_tokens++;
            }
        }
    }
    if (n_tokens == 0) {
        throw contract_error("sft: batch has no unmasked target tokens");
    }

    Tape tape;
    TapeLeaves lv = policy.make_leaves(tape);
    std::vector<ops::NodeId> terms;
    for (const auto & ex : batch) {
        if (ex.target.empty()) {
            continue;
        }
        std::vector<int> prompt;
        prompt.push_back(tok::BOS);
        prompt.insert(prompt.end(), ex.inst.question.begin(), ex.inst.question.end());
        std::vector<int> toks = prompt;
        toks.insert(toks.end(), ex.target.begin(), ex.target.end());
        if ((int) toks.size() > policy.config().max_seq_len) {
            throw contract_error("sft: sequence exceeds max length");
        }

        ops::NodeId logits = policy.forward_logits_tape(tape, lv, ex.inst, toks);
        ops::NodeId lp_all = ops::log_softmax_rows(tape, logits);
        ops::NodeId lp_rows = ops::slice_rows(tape, lp_all, k + (int) prompt.size() - 1,
                                              (int) ex.target.size());
        ops::NodeId lp = ops::pick(tape, lp_rows, ex.target);
        Tensor w({(int64_t) ex.target.size()});
        for (size_t t = 0; t < ex.target.size(); ++t) {
            w.data[t] = ex.target[t] == tok::PAD ? 0.0f : -1.0f / (float) n_tokens;
        }
        terms.push_back(ops::weighted_sum(tape, lp, std::move(w)));
    }
    ops::NodeId loss = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) {
        loss = ops::add(tape, loss, terms[i]);
    }
    const float loss_v = tape.value(loss).data[0];
    if (update) {
        tape.backward(loss);
        policy.params().zero_grad();
        policy.accumulate_grads(tape, lv);
        OptimizerConfig opt = cfg->optimizer;
        opt.lr = lr;
        policy.params().step(opt);
    }
    return loss_v;
}

float sft_step(Policy & policy, const std::vector<SFTExample> & batch, const SFTConfig & cfg,
               float lr) {
    return batch_loss(policy, batch, true, &cfg, lr);
}

float sft_loss(Policy & policy, const std::vector<SFTExample> & batch) {
    return batch_loss(policy, batch, false, nullptr, 0.0f);
}

static double greedy_format_mean(const Policy & policy, const std::vector<SFTExample> & val) {
    if (val.empty()) {
        return 0.0;
    }
    SampleControls ctl;
    ctl.temperature = 0.0f;
    double s = 0;
    for (const auto & ex : val) {
        Rollout r = policy.sample_sequence(ex.inst, ctl, 0);
        s += format_reward(r.tokens);
    }
    return s / val.size();
}

static SFTReport train_sft(Policy & policy, const std::vector<SFTExample> & dataset,
                           const SFTConfig & cfg, uint64_t seed, const std::string & stage) {
    if (cfg.optimizer.lr <= 0.0f) {
        throw config_error("sft: learning rate must be positive");
    }
    if (cfg.warmup_ratio < 0.0f || cfg.warmup_ratio >= 1.0f) {
        throw config_error("sft: warmup ratio must be in [0, 1)");
    }
    if (dataset.empty()) {
        throw contract_error("sft: empty dataset");
    }

    SFTReport rep;
    if (cfg.epochs == 0) {
        rep.converged = false;
        return rep;
    }

    // deterministic split and shuffles
    Rng rng = Rng(seed).split(0x5f7a11);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_int((int) i)]);
    }
    const size_t n_val = std::min(dataset.size() - 1,
                                  std::max<size_t>(1, (size_t) (cfg.val_fraction * dataset.size())));
    std::vector<SFTExample> val, train;
    for (size_t i = 0; i < order.size(); ++i) {
        (i < n_val ? val : train).push_back(dataset[order[i]]);
    }

    const int n_batches = ((int) train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const int total_steps = cfg.epochs * n_batches;

    double best_val = 1e30;
    int bad_checks = 0;
    std::vector<Tensor> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (const auto & p : policy.params().all()) {
            best_params.push_back(p.value);
        }
    };
    snapshot();

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // reshuffle the training split each epoch
        for (size_t i = train.size(); i > 1; --i) {
            std::swap(train[i - 1], train[rng.next_int((int) i)]);
        }
        double loss_sum = 0;
        for (int b = 0; b < n_batches; ++b) {
            const size_t lo = (size_t) b * cfg.batch_size;
            const size_t hi = std::min(train.size(), lo + cfg.batch_size);
            std::vector<SFTExample> batch(train.begin() + lo, train.begin() + hi);
            const float lr = cosine_lr(step, total_steps, cfg.warmup_ratio, cfg.optimizer.lr);
            loss_sum += sft_step(policy, batch, cfg, lr);
            step++;
        }
        const double val_loss = sft_loss(policy, val);

        MetricsRecord m;
        m.stage = stage;
        m.index = epoch;
        m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.loss = loss_sum / n_batches;
        m.learning_rate = cosine_lr(std::min(step, total_steps) - 1, total_steps,
                                    cfg.warmup_ratio, cfg.optimizer.lr);
        m.extra["val_loss"] = val_loss;
        rep.history.push_back(std::move(m));
        rep.epochs_run = epoch + 1;

        if (val_loss < best_val - 1e-6) {
            best_val = val_loss;
            bad_checks = 0;
            snapshot();
        } else {
            bad_checks++;
            if (bad_checks >= cfg.patience) {
                break;
            }
        }
    }

    // restore the best validation checkpoint
    auto & all = policy.params().all();
    for (size_t i = 0; i < all.size(); ++i) {
        all[i].value = best_params[i];
    }
    rep.best_val_loss = best_val;
    rep.final_format_mean = greedy_format_mean(policy, val);
    rep.converged = rep.final_format_mean >= cfg.format_target;
    return rep;
}

SFTReport cold_start(Policy & policy, const std::vector<SFTExample> & dataset,
                     const SFTConfig & cfg, uint64_t seed) {
    std::set<std::string> labels = cfg.frozen_labels;
    policy.apply_freeze_mask(labels);
    return train_sft(policy, dataset, cfg, seed, "cold_start");
}

SFTReport connector_only_tune(Policy & policy, const std::vector<SFTExample> & dataset,
                              const SFTConfig & cfg, uint64_t seed) {
    if (cfg.frozen_labels.count("connector")) {
        throw config_error("connector_only_tune: connector must stay trainable");
    }
    policy.apply_freeze_mask({"encoder", "decoder"});
    SFTReport rep = train_sft(policy, dataset, cfg, seed, "connector_tune");
    for (auto & m : rep.history) {
        m.stage = "connector_tune";
    }
    return rep;
}

std::vector<SFTExample> teacher_dataset(const std::vector<TaskInstance> & instances, uint64_t seed,
                                        const TaskGenConfig & cfg) {
    Rng rng = Rng(seed).split(0x7e4c);
    std::vector<SFTExample> out;
    for (size_t i = 0; i < instances.size(); ++i) {
        SFTExample ex;
        ex.inst = instances[i];
        ex.target = teacher_trace(instances[i], rng.split(i).next_u64(), cfg).tokens;
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<SFTExample> distill_dataset(const Policy & policy,
                                        const std::vector<TaskInstance> & instances) {
    SampleControls ctl;
    ctl.temperature = 0.0f;
    std::vector<SFTExample> out;
    for (const auto & inst : instances) {
        Rollout r = policy.sample_sequence(inst, ctl, 0);
        if (rule_accuracy(r.tokens, inst) == 1) {
            out.push_back({inst, r.tokens});
        }
    }
    return out;
}

} // namespace skrl
