#pragma once

#include "gcsim/encoder.hpp"
#include "gcsim/estimator.hpp"

#include <cstdint>
#include <memory>
#include <span>

namespace gcsim {

struct TransformerHyperparams {
  int num_layers = 3;
  int hidden_dim = 64;
  int num_heads = 4;
  int feedforward_dim = 0; // 0 means 2*hidden_dim
  int max_sequence_length = 128;
  double dropout = 0.0;

  int ffn_dim() const { return feedforward_dim > 0 ? feedforward_dim : 2 * hidden_dim; }
};

/// Two-encoder conditional density model: a categorical encoder predicting
/// the next categorical block from history, and a continuous encoder that
/// additionally conditions on the (observed or sampled) same-step
/// categorical block. Either encoder is skipped entirely when its block is
/// empty; the schema drives the wiring.
class TransformerEstimator : public ConditionalDensityEstimator {
public:
  TransformerEstimator(Schema schema, NormStats stats, TransformerHyperparams hp,
                       std::uint64_t init_seed);

  const Schema& schema() const override { return schema_; }
  const NormStats& stats() const override { return stats_; }
  const TransformerHyperparams& hyperparams() const { return hp_; }

  bool has_cat() const { return cat_enc_ != nullptr; }
  bool has_cont() const { return cont_enc_ != nullptr; }
  Encoder* cat_encoder() { return cat_enc_.get(); }
  Encoder* cont_encoder() { return cont_enc_.get(); }
  const Encoder* cat_encoder() const { return cat_enc_.get(); }
  const Encoder* cont_encoder() const { return cont_enc_.get(); }

  /// Masked-batch forward over equal-length trajectories, producing
  /// sum-form losses over targets [first_target, T). The fast path of the
  /// per-prefix training procedure; equivalence with the iterative path is
  /// pinned by test.
  struct ChunkLoss {
    Tape::NodeId ce_sum = -1;
    Tape::NodeId mse_sum = -1;
    std::size_t ce_cells = 0;
    std::size_t mse_cells = 0;
    Encoder::Pass cat_pass, cont_pass;
  };
  ChunkLoss chunk_loss(Tape& tape, std::span<const Trajectory* const> units,
                       std::size_t first_target, bool train_mode = false,
                       Rng* dropout_rng = nullptr) const;

  /// Iterative per-prefix prediction of target time t (0-indexed covariate
  /// row, 1 <= t <= T-1): encodes the literal prefix and returns that one
  /// step's outputs. The categorical prediction conditions on rows < t; the
  /// continuous prediction additionally conditions on the observed
  /// categorical block at t.
  struct StepPrediction {
    Tensor cat_probs;  // (1, onehot_width) or empty
    Tensor cont_means; // (1, n_cont) normalized, or empty
  };
  StepPrediction forward_teacher_forced(const Trajectory& unit, std::size_t t) const;

  TeacherForced predict_teacher_forced(const Trajectory& unit) const override;
  std::unique_ptr<RolloutSession> make_rollout(std::size_t n_draws) const override;

  /// Base feature width shared by both encoders (the continuous encoder
  /// adds the one-hot width of the categorical block on top).
  std::size_t base_input_width() const { return feature_width(schema_); }

  /// Assembles encoder input rows for positions [0, seq_len) of a unit.
  /// with_next_cat appends the observed next-step categorical one-hot
  /// (teacher forcing), requiring seq_len < unit length.
  Tensor assemble_inputs(const Trajectory& unit, std::size_t seq_len, bool with_next_cat) const;

private:
  friend class TransformerRollout;
  Schema schema_;
  NormStats stats_;
  TransformerHyperparams hp_;
  std::unique_ptr<Encoder> cat_enc_;
  std::unique_ptr<Encoder> cont_enc_;
};

} // namespace gcsim
