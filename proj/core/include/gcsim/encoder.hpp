#pragma once

#include "gcsim/optim.hpp"
#include "gcsim/rng.hpp"
#include "gcsim/tape.hpp"
#include "gcsim/tensor.hpp"

#include <cstdint>
#include <vector>

namespace gcsim {

struct EncoderConfig {
  int num_layers = 3;
  int hidden_dim = 64;
  int num_heads = 4;
  int feedforward_dim = 128;
  int max_sequence_length = 128;
  int input_dim = 0;
  /// Output head widths: one class count per categorical output block,
  /// plus a flat continuous output width. Either side may be empty.
  std::vector<int> cat_classes;
  int cont_out = 0;
  double dropout = 0.0;

  int output_dim() const;
  void validate() const; // hidden divisible by heads, dims positive
};

/// Pre-norm transformer encoder with causal self-attention, a linear input
/// embedding with additive sinusoidal positional encoding, and prediction
/// heads (ReLU-linear + per-block softmax for categorical outputs, affine
/// for continuous outputs). Position t's output depends only on inputs at
/// positions <= t.
class Encoder {
public:
  Encoder(EncoderConfig cfg, std::uint64_t init_seed);

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Handles of one forward pass on one tape. Tapes are rebuilt per pass;
  /// several passes may run concurrently on disjoint tapes.
  struct Pass {
    Tape::NodeId hidden = -1; // (batch*seq_len, hidden_dim)
    std::size_t batch = 0, seq_len = 0;
    std::vector<Tape::NodeId> leaves; // parallel to params()
  };

  /// Linear projection of raw feature rows plus positional encoding.
  /// Exposed separately so the embedding contract is testable on its own.
  Tape::NodeId embed(Tape& tape, const Tensor& input, std::size_t batch,
                     std::size_t seq_len, Pass& pass) const;

  /// Full stack: embed + num_layers pre-norm blocks + final norm.
  /// `input` is (batch*seq_len, input_dim) row-major, batch-major.
  Pass forward(Tape& tape, const Tensor& input, std::size_t batch, std::size_t seq_len,
               bool train_mode = false, Rng* dropout_rng = nullptr) const;

  /// Per-covariate class probabilities, concatenated: (rows, sum cat_classes).
  Tape::NodeId head_categorical(Tape& tape, const Pass& pass) const;
  /// Affine map to cont_out columns.
  Tape::NodeId head_continuous(Tape& tape, const Pass& pass) const;

  /// After tape.backward, folds this pass's parameter gradients into a sink
  /// created by params().make_grad_sink().
  void collect_grads(const Tape& tape, const Pass& pass, std::vector<Tensor>& sink) const;

  const Tensor& positional_table() const { return pos_table_; }

private:
  friend class EncoderCache;
  struct LayerIdx {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    int ln2_g, ln2_b, w1, b1, w2, b2;
  };
  EncoderConfig cfg_;
  ParamSet params_;
  int w_emb_, b_emb_;
  std::vector<LayerIdx> layers_;
  int lnf_g_, lnf_b_;
  int w_cat_ = -1, b_cat_ = -1;
  int w_cont_ = -1, b_cont_ = -1;
  Tensor pos_table_; // (max_sequence_length, hidden_dim)
};

/// Incremental inference state: per-layer key/value caches over a batch of
/// rollout lanes. Appending positions reproduces the masked forward pass
/// values for the new positions without touching earlier ones.
class EncoderCache {
public:
  EncoderCache(const Encoder& enc, std::size_t batch);

  std::size_t batch() const { return batch_; }
  std::size_t length() const { return len_; }
  void reset();

  /// Appends `steps` positions for every lane. `input` is
  /// (batch*steps, input_dim), batch-major. Returns the final hidden rows
  /// (batch*steps, hidden_dim).
  Tensor append(const Tensor& input, std::size_t steps);

  /// Head evaluations on hidden rows produced by append().
  Tensor categorical_probs(const Tensor& hidden) const;
  Tensor continuous_means(const Tensor& hidden) const;

  /// New cache with `copies` lanes, each a copy of this single-lane cache.
  EncoderCache replicate(std::size_t copies) const;

private:
  const Encoder* enc_;
  std::size_t batch_;
  std::size_t len_ = 0;
  // (layers) x (batch * max_len * hidden) K and V caches.
  std::vector<std::vector<double>> key_cache_, value_cache_;
};

} // namespace gcsim
