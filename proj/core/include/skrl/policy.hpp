#pragma once

#include "skrl/params.hpp"
#include "skrl/rng.hpp"
#include "skrl/rollout.hpp"
#include "skrl/tape.hpp"
#include "skrl/taskgen.hpp"
#include "skrl/vocab.hpp"

#include <map>
#include <set>
#include <vector>

namespace skrl {

struct degenerate_distribution_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PolicyConfig {
    int embed_width = 64;     // decoder embedding width
    int encoder_width = 64;   // encoder output width (== connector input width)
    int n_percept = 4;        // k perceptual tokens
    int decoder_depth = 1;    // causal self-attention layers
    int ffn_mult = 4;
    int max_seq_len = 64;     // tokens, excluding the k perceptual positions
    int grid_h = 3;
    int grid_w = 3;
    int vocab_size = tok::VOCAB_SIZE;
    float init_range = 0.08f; // uniform [-r, r]

    int n_cells() const { return grid_h * grid_w; }
};

// per-step generation controls shared by sample_sequence and the decode modes
struct SampleControls {
    float temperature = 1.0f;
    std::set<int> banned;            // logit -> -inf at every step
    std::set<int> banned_first_step; // additionally banned at the first generated position
    int force_first_token = -1;      // emitted unconditionally as step 0 when >= 0
    int think_budget = -1;           // force THINK_CLOSE after this many in-think tokens; -1 = off
    int max_new_tokens = -1;         // cap on generated tokens below the model maximum; -1 = off
};

// Node ids for every parameter leaf of one tape
struct TapeLeaves {
    std::map<std::string, ops::NodeId> ids;
};

// Desk-scale encoder–connector–decoder policy.
//   encoder:   per-cell digit+position embedding -> 2-layer MLP -> learned pooling into k tokens
//   connector: one affine map per perceptual token
//   decoder:   pre-LN causal self-attention transformer, single head
class Policy {
  public:
    explicit Policy(PolicyConfig cfg);

    const PolicyConfig & config() const { return cfg_; }
    ParamStore & params() { return params_; }
    const ParamStore & params() const { return params_; }

    void init_params(uint64_t seed);
    // square connector becomes the identity map (test hook)
    void init_connector_identity();

    void apply_freeze_mask(const std::set<std::string> & frozen_labels);

    // ---- tape (training) path ----
    TapeLeaves make_leaves(Tape & tape) const;
    // logits over the whole context: rows 0..k-1 are perceptual positions,
    // row k+j carries the distribution over token j+1
    ops::NodeId forward_logits_tape(Tape & tape, const TapeLeaves & lv,
                                    const TaskInstance & inst, const std::vector<int> & toks) const;
    // fold tape gradients back into the store, dropping frozen labels
    void accumulate_grads(Tape & tape, const TapeLeaves & lv);

    // ---- plain (inference) path ----
    // k perceptual embeddings for a grid (encoder output, pre-connector)
    std::vector<std::vector<float>> encode(const std::vector<std::vector<int>> & grid) const;
    // connector applied to encoder output
    std::vector<std::vector<float>> connect(const std::vector<std::vector<float>> & embeds) const;
    // full-prefix recompute of the logits at one position (reference semantics)
    std::vector<float> decode_step(const TaskInstance & inst, const std::vector<int> & prefix,
                                   int position) const;

    Rollout sample_sequence(const TaskInstance & inst, const SampleControls & ctl, uint64_t seed) const;

    // incremental decoder with a KV cache; one session per generation
    class Session;

  private:
    friend class Session;
    PolicyConfig cfg_;
    ParamStore params_;
};

// Incremental decoding session. Feed positions one at a time; logits() gives
// the next-token distribution after the last fed position.
class Policy::Session {
  public:
    Session(const Policy & policy, const TaskInstance & inst);

    void feed(int token);
    const std::vector<float> & logits() const { return logits_; }
    int n_fed() const { return n_tokens_; }

  private:
    void run_position(const std::vector<float> & x_in);

    const Policy & p_;
    int n_tokens_ = 0; // token positions fed (perceptual rows done at construction)
    std::vector<float> logits_;
    struct LayerCache {
        std::vector<std::vector<float>> k;
        std::vector<std::vector<float>> v;
    };
    std::vector<LayerCache> cache_;
};

} // namespace skrl
