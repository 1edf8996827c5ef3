#include "skrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace skrl {

Policy::Policy(PolicyConfig cfg) : cfg_(cfg) {
    const int E = cfg_.encoder_width;
    const int D = cfg_.embed_width;
    const int F = D * cfg_.ffn_mult;
    const int V = cfg_.vocab_size;
    const int k = cfg_.n_percept;
    const int C = cfg_.n_cells();

    using ML = ModuleLabel;
    params_.add("enc.digit_embed", ML::encoder, Tensor({10, E}));
    params_.add("enc.cell_pos", ML::encoder, Tensor({C, E}));
    params_.add("enc.w1", ML::encoder, Tensor({E, E}));
    params_.add("enc.b1", ML::encoder, Tensor({E}));
    params_.add("enc.w2", ML::encoder, Tensor({E, E}));
    params_.add("enc.b2", ML::encoder, Tensor({E}));
    params_.add("enc.pool", ML::encoder, Tensor({k, C}));

    params_.add("conn.w", ML::connector, Tensor({E, D}));
    params_.add("conn.b", ML::connector, Tensor({D}));

    params_.add("dec.tok_embed", ML::decoder, Tensor({V, D}));
    params_.add("dec.pos_embed", ML::decoder, Tensor({k + cfg_.max_seq_len, D}));
    for (int l = 0; l < cfg_.decoder_depth; ++l) {
        const std::string pre = "dec.l" + std::to_string(l) + ".";
        params_.add(pre + "ln1.g", ML::decoder, Tensor({D}));
        params_.add(pre + "ln1.b", ML::decoder, Tensor({D}));
        params_.add(pre + "wq", ML::decoder, Tensor({D, D}));
        params_.add(pre + "wk", ML::decoder, Tensor({D, D}));
        params_.add(pre + "wv", ML::decoder, Tensor({D, D}));
        params_.add(pre + "wo", ML::decoder, Tensor({D, D}));
        params_.add(pre + "ln2.g", ML::decoder, Tensor({D}));
        params_.add(pre + "ln2.b", ML::decoder, Tensor({D}));
        params_.add(pre + "ffn.w1", ML::decoder, Tensor({D, F}));
        params_.add(pre + "ffn.b1", ML::decoder, Tensor({F}));
        params_.add(pre + "ffn.w2", ML::decoder, Tensor({F, D}));
        params_.add(pre + "ffn.b2", ML::decoder, Tensor({D}));
    }
    params_.add("dec.lnf.g", ML::decoder, Tensor({D}));
    params_.add("dec.lnf.b", ML::decoder, Tensor({D}));
    params_.add("dec.head.w", ML::decoder, Tensor({D, V}));
    params_.add("dec.head.b", ML::decoder, Tensor({V}));
}

void Policy::init_params(uint64_t seed) {
    Rng rng(seed);
    for (Param & p : params_.all()) {
        for (float & v : p.value.data) {
            v = rng.next_float(-cfg_.init_range, cfg_.init_range);
        }
    }
    // layer-norm gains start at 1, biases at 0
    for (Param & p : params_.all()) {
        if (p.name.find("ln") != std::string::npos) {
            const bool gain = p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".g") == 0;
            std::fill(p.value.data.begin(), p.value.data.end(), gain ? 1.0f : 0.0f);
        }
    }
}

void Policy::init_connector_identity() {
    Param & w = params_.get("conn.w");
    if (w.value.rows() != w.value.cols()) {
        throw config_error("identity connector requires encoder_width == embed_width");
    }
    w.value = Tensor::identity(w.value.rows());
    Param & b = params_.get("conn.b");
    std::fill(b.value.data.begin(), b.value.data.end(), 0.0f);
}

void Policy::apply_freeze_mask(const std::set<std::string> & frozen_labels) {
    std::set<ModuleLabel> labels;
    for (const std::string & s : frozen_labels) {
        labels.insert(module_label_from_name(s));
    }
    params_.set_frozen(labels);
}

// ---- tape path ----

TapeLeaves Policy::make_leaves(Tape & tape) const {
    TapeLeaves lv;
    for (const Param & p : params_.all()) {
        lv.ids[p.name] = tape.leaf(p.value, !params_.is_frozen(p.label));
    }
    return lv;
}

void Policy::accumulate_grads(Tape & tape, const TapeLeaves & lv) {
    for (Param & p : params_.all()) {
        if (params_.is_frozen(p.label)) {
            continue;
        }
        const Tensor & g = tape.grad(lv.ids.at(p.name));
        for (size_t i = 0; i < g.data.size(); ++i) {
            p.grad.data[i] += g.data[i];
        }
    }
}

ops::NodeId Policy::forward_logits_tape(Tape & tape, const TapeLeaves & lv,
                                        const TaskInstance & inst, const std::vector<int> & toks) const {
    using namespace ops;
    const int D = cfg_.embed_width;
    const int k = cfg_.n_percept;
    const int T = (int) toks.size();
    if (T > cfg_.max_seq_len) {
        throw length_error_skrl("sequence exceeds max length");
    }
    if ((int) inst.grid.size() != cfg_.grid_h || (int) inst.grid[0].size() != cfg_.grid_w) {
        throw shape_error("grid shape does not match policy config");
    }
    auto id = [&](const char * n) { return lv.ids.at(n); };

    // encoder
    std::vector<int> cell_digits;
    for (const auto & row : inst.grid) {
        for (int v : row) {
            cell_digits.push_back(Vocab::digit(v));
        }
    }
    NodeId x = gather_rows(tape, id("enc.digit_embed"), cell_digits);
    x = add(tape, x, id("enc.cell_pos"));
    x = tanh_op(tape, add_row_vector(tape, matmul(tape, x, id("enc.w1")), id("enc.b1")));
    x = add_row_vector(tape, matmul(tape, x, id("enc.w2")), id("enc.b2"));
    x = matmul(tape, id("enc.pool"), x); // [k, E]

    // connector
    NodeId conn = add_row_vector(tape, matmul(tape, x, id("conn.w")), id("conn.b")); // [k, D]

    // decoder
    NodeId tokemb = gather_rows(tape, id("dec.tok_embed"), toks);
    NodeId ctx = concat_rows(tape, conn, tokemb); // [k+T, D]
    ctx = add(tape, ctx, slice_rows(tape, id("dec.pos_embed"), 0, k + T));

    const int n = k + T;
    Tensor mask({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            mask.at(i, j) = -1e9f;
        }
    }
    const float inv_sqrt_d = 1.0f / std::sqrt((float) D);

    for (int l = 0; l < cfg_.decoder_depth; ++l) {
        const std::string pre = "dec.l" + std::to_string(l) + ".";
        auto lid = [&](const char * n2) { return lv.ids.at(pre + n2); };
        NodeId h = layer_norm_rows(tape, ctx, lid("ln1.g"), lid("ln1.b"));
        NodeId q = matmul(tape, h, lid("wq"));
        NodeId kk = matmul(tape, h, lid("wk"));
        NodeId v = matmul(tape, h, lid("wv"));
        NodeId scores = scale(tape, matmul(tape, q, transpose(tape, kk)), inv_sqrt_d);
        scores = add_const(tape, scores, mask);
        NodeId attn = softmax_rows(tape, scores);
        NodeId o = matmul(tape, matmul(tape, attn, v), lid("wo"));
        ctx = add(tape, ctx, o);
        NodeId h2 = layer_norm_rows(tape, ctx, lid("ln2.g"), lid("ln2.b"));
        NodeId f = tanh_op(tape, add_row_vector(tape, matmul(tape, h2, lid("ffn.w1")), lid("ffn.b1")));
        f = add_row_vector(tape, matmul(tape, f, lid("ffn.w2")), lid("ffn.b2"));
        ctx = add(tape, ctx, f);
    }
    NodeId y = layer_norm_rows(tape, ctx, id("dec.lnf.g"), id("dec.lnf.b"));
    return add_row_vector(tape, matmul(tape, y, id("dec.head.w")), id("dec.head.b")); // [k+T, V]
}

// ---- plain path ----

namespace {

// out[j] += x[i] * w[i,j]
void matvec(const float * x, const Tensor & w, float * out) {
    const int in = w.rows(), on = w.cols();
    std::fill(out, out + on, 0.0f);
    for (int i = 0; i < in; ++i) {
        const float xv = x[i];
        if (xv == 0.0f) {
            continue;
        }
        const float * wrow = w.data.data() + (size_t) i * on;
        for (int j = 0; j < on; ++j) {
            out[j] += xv * wrow[j];
        }
    }
}

void layer_norm_vec(std::vector<float> & x, const Tensor & g, const Tensor & b, float eps = 1e-5f) {
    const int n = (int) x.size();
    double mean = 0.0;
    for (float v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : x) {
        const double d = v - mean;
        var += d * d;
    }
    var /= n;
    const float inv = (float) (1.0 / std::sqrt(var + eps));
    for (int j = 0; j < n; ++j) {
        x[j] = ((float) (x[j] - mean)) * inv * g.data[j] + b.data[j];
    }
}

} // namespace

std::vector<std::vector<float>> Policy::encode(const std::vector<std::vector<int>> & grid) const {
    if ((int) grid.size() != cfg_.grid_h) {
        throw shape_error("encode: grid has wrong height");
    }
    const int E = cfg_.encoder_width;
    const Tensor & de = params_.get("enc.digit_embed").value;
    const Tensor & cp = params_.get("enc.cell_pos").value;
    const Tensor & w1 = params_.get("enc.w1").value;
    const Tensor & b1 = params_.get("enc.b1").value;
    const Tensor & w2 = params_.get("enc.w2").value;
    const Tensor & b2 = params_.get("enc.b2").value;
    const Tensor & pool = params_.get("enc.pool").value;

    std::vector<std::vector<float>> cells;
    int c = 0;
    for (const auto & row : grid) {
        if ((int) row.size() != cfg_.grid_w) {
            throw shape_error("encode: grid has wrong width");
        }
        for (int d : row) {
            if (d < 0 || d > 9) {
                throw shape_error("encode: grid entry outside 0..9");
            }
            std::vector<float> x(E);
            for (int j = 0; j < E; ++j) {
                x[j] = de.at(d, j) + cp.at(c, j);
            }
            std::vector<float> h(E), h2(E);
            matvec(x.data(), w1, h.data());
            for (int j = 0; j < E; ++j) {
                h[j] = std::tanh(h[j] + b1.data[j]);
            }
            matvec(h.data(), w2, h2.data());
            for (int j = 0; j < E; ++j) {
                h2[j] += b2.data[j];
            }
            cells.push_back(std::move(h2));
            ++c;
        }
    }
    std::vector<std::vector<float>> out(cfg_.n_percept, std::vector<float>(E, 0.0f));
    for (int t = 0; t < cfg_.n_percept; ++t) {
        for (int i = 0; i < cfg_.n_cells(); ++i) {
            const float w = pool.at(t, i);
            for (int j = 0; j < E; ++j) {
                out[t][j] += w * cells[i][j];
            }
        }
    }
    return out;
}

std::vector<std::vector<float>> Policy::connect(const std::vector<std::vector<float>> & embeds) const {
    const Tensor & w = params_.get("conn.w").value;
    const Tensor & b = params_.get("conn.b").value;
    const int D = cfg_.embed_width;
    std::vector<std::vector<float>> out;
    for (const auto & e : embeds) {
        if ((int) e.size() != cfg_.encoder_width) {
            throw shape_error("connect: width mismatch");
        }
        std::vector<float> y(D);
        matvec(e.data(), w, y.data());
        for (int j = 0; j < D; ++j) {
            y[j] += b.data[j];
        }
        out.push_back(std::move(y));
    }
    return out;
}

Policy::Session::Session(const Policy & policy, const TaskInstance & inst) : p_(policy) {
    cache_.resize(p_.cfg_.decoder_depth);
    const Tensor & pos = p_.params_.get("dec.pos_embed").value;
    auto conn = p_.connect(p_.encode(inst.grid));
    for (int t = 0; t < p_.cfg_.n_percept; ++t) {
        std::vector<float> x = conn[t];
        for (int j = 0; j < p_.cfg_.embed_width; ++j) {
            x[j] += pos.at(t, j);
        }
        run_position(x);
    }
}

void Policy::Session::feed(int token) {
    if (n_tokens_ >= p_.cfg_.max_seq_len) {
        throw length_error_skrl("decode position past max sequence length");
    }
    const Tensor & te = p_.params_.get("dec.tok_embed").value;
    const Tensor & pos = p_.params_.get("dec.pos_embed").value;
    const int D = p_.cfg_.embed_width;
    std::vector<float> x(D);
    for (int j = 0; j < D; ++j) {
        x[j] = te.at(token, j) + pos.at(p_.cfg_.n_percept + n_tokens_, j);
    }
    ++n_tokens_;
    run_position(x);
}

void Policy::Session::run_position(const std::vector<float> & x_in) {
    const int D = p_.cfg_.embed_width;
    const int F = D * p_.cfg_.ffn_mult;
    const float inv_sqrt_d = 1.0f / std::sqrt((float) D);
    std::vector<float> x = x_in;
    for (int l = 0; l < p_.cfg_.decoder_depth; ++l) {
        const std::string pre = "dec.l" + std::to_string(l) + ".";
        auto & P = p_.params_;
        std::vector<float> h = x;
        layer_norm_vec(h, P.get(pre + "ln1.g").value, P.get(pre + "ln1.b").value);
        std::vector<float> q(D), kk(D), v(D);
        matvec(h.data(), P.get(pre + "wq").value, q.data());
        matvec(h.data(), P.get(pre + "wk").value, kk.data());
        matvec(h.data(), P.get(pre + "wv").value, v.data());
        cache_[l].k.push_back(kk);
        cache_[l].v.push_back(v);
        const size_t ctx = cache_[l].k.size();
        std::vector<float> scores(ctx);
        for (size_t j = 0; j < ctx; ++j) {
            double s = 0.0;
            for (int d = 0; d < D; ++d) {
                s += (double) q[d] * cache_[l].k[j][d];
            }
            scores[j] = (float) s * inv_sqrt_d;
        }
        ops::softmax_inplace(scores);
        std::vector<float> o(D, 0.0f);
        for (size_t j = 0; j < ctx; ++j) {
            const float a = scores[j];
            for (int d = 0; d < D; ++d) {
                o[d] += a * cache_[l].v[j][d];
            }
        }
        std::vector<float> proj(D);
        matvec(o.data(), p_.params_.get(pre + "wo").value, proj.data());
        for (int d = 0; d < D; ++d) {
            x[d] += proj[d];
        }
        std::vector<float> h2 = x;
        layer_norm_vec(h2, P.get(pre + "ln2.g").value, P.get(pre + "ln2.b").value);
        std::vector<float> f(F);
        matvec(h2.data(), P.get(pre + "ffn.w1").value, f.data());
        const Tensor & fb1 = P.get(pre + "ffn.b1").value;
        for (int d = 0; d < F; ++d) {
            f[d] = std::tanh(f[d] + fb1.data[d]);
        }
        std::vector<float> f2(D);
        matvec(f.data(), P.get(pre + "ffn.w2").value, f2.data());
        const Tensor & fb2 = P.get(pre + "ffn.b2").value;
        for (int d = 0; d < D; ++d) {
            x[d] += f2[d] + fb2.data[d];
        }
    }
    std::vector<float> y = x;
    layer_norm_vec(y, p_.params_.get("dec.lnf.g").value, p_.params_.get("dec.lnf.b").value);
    logits_.assign(p_.cfg_.vocab_size, 0.0f);
    matvec(y.data(), p_.params_.get("dec.head.w").value, logits_.data());
    const Tensor & hb = p_.params_.get("dec.head.b").value;
    for (int j = 0; j < p_.cfg_.vocab_size; ++j) {
        logits_[j] += hb.data[j];
    }
}

std::vector<float> Policy::decode_step(const TaskInstance & inst, const std::vector<int> & prefix,
                                       int position) const {
    if (position < 0 || position >= (int) prefix.size()) {
        throw length_error_skrl("decode_step: position outside prefix");
    }
    Session s(*this, inst);
    for (int i = 0; i <= position; ++i) {
        s.feed(prefix[i]);
    }
    return s.logits();
}

Rollout Policy::sample_sequence(const TaskInstance & inst, const SampleControls & ctl, uint64_t seed) const {
    if (ctl.temperature < 0.0f) {
        throw contract_error("temperature must be nonnegative");
    }
    if (ctl.banned.count(tok::EOS)) {
        throw contract_error("banned set must not contain EOS");
    }
    Rollout r;
    r.prompt.push_back(tok::BOS);
    r.prompt.insert(r.prompt.end(), inst.question.begin(), inst.question.end());

    Session session(*this, inst);
    for (int t : r.prompt) {
        session.feed(t);
    }

    Rng rng(seed);
    bool in_think = false;
    bool think_done = false;
    int in_think_count = 0;

    int budget_room = cfg_.max_seq_len - (int) r.prompt.size();
    if (ctl.max_new_tokens >= 0 && ctl.max_new_tokens < budget_room) {
        budget_room = ctl.max_new_tokens;
    }
    for (int step = 0; step < budget_room; ++step) {
        const std::vector<float> & raw = session.logits();
        r.entropies.push_back([&] {
            std::vector<float> p = raw;
            ops::softmax_inplace(p);
            return ops::entropy_nats(p);
        }());

        int chosen = -1;
        float logprob = 0.0f;
        bool forced = false;
        if (step == 0 && ctl.force_first_token >= 0) {
            chosen = ctl.force_first_token;
            forced = true;
        } else if (in_think && !think_done && ctl.think_budget >= 0 && in_think_count >= ctl.think_budget) {
            chosen = tok::THINK_CLOSE;
            forced = true;
        } else {
            std::vector<char> allowed(raw.size(), 1);
            for (int b : ctl.banned) {
                allowed[b] = 0;
            }
            if (step == 0) {
                for (int b : ctl.banned_first_step) {
                    allowed[b] = 0;
                }
            }
            int n_allowed = 0;
            for (char a : allowed) {
                n_allowed += a;
            }
            if (n_allowed == 0) {
                throw degenerate_distribution_error("all tokens banned");
            }
            if (ctl.temperature == 0.0f) {
                chosen = -1;
                for (size_t j = 0; j < raw.size(); ++j) {
                    if (allowed[j] && (chosen < 0 || raw[j] > raw[chosen])) {
                        chosen = (int) j;
                    }
                }
                logprob = 0.0f;
            } else {
                std::vector<float> p(raw.size());
                for (size_t j = 0; j < raw.size(); ++j) {
                    p[j] = allowed[j] ? raw[j] / ctl.temperature : -std::numeric_limits<float>::infinity();
                }
                // -inf survives max-subtraction as exp(-inf) = 0: banned prob is exactly 0
                ops::softmax_inplace(p);
                chosen = rng.sample_categorical(p);
                logprob = std::log(std::max(p[chosen], 1e-30f));
            }
        }
        if (forced || ctl.temperature == 0.0f) {
            logprob = 0.0f;
        }

        r.tokens.push_back(chosen);
        r.logprobs.push_back(logprob);

        if (chosen == tok::THINK_OPEN && !think_done) {
            in_think = true;
        } else if (chosen == tok::THINK_CLOSE && in_think) {
            in_think = false;
            think_done = true;
        } else if (in_think) {
            ++in_think_count;
        }
        if (chosen == tok::EOS) {
            break;
        }
        if ((int) (r.prompt.size() + r.tokens.size()) >= cfg_.max_seq_len) {
            break;
        }
        session.feed(chosen);
    }
    return r;
}

} // namespace skrl
