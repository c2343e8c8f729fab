#pragma once

#include "gcsim/encoder.hpp"
#include "gcsim/estimator.hpp"
#include "gcsim/transformer_estimator.hpp"

#include <memory>
#include <span>

namespace gcsim {

/// Encoder-based model of the observational treatment mechanism: predicts
/// the action A_t from history (L_0..t, A_0..t-1). Every treatment column
/// gets a 2-class indicator head (taken / withheld, or nonzero / zero for
/// doses); continuous columns additionally get a conditional dose head with
/// an empirical residual pool for sampling.
class PolicyModel {
public:
  PolicyModel(Schema schema, NormStats stats, TransformerHyperparams hp, std::uint64_t init_seed);

  const Schema& schema() const { return schema_; }
  const NormStats& stats() const { return stats_; }
  const TransformerHyperparams& hyperparams() const { return hp_; }
  Encoder& encoder() { return *enc_; }
  const Encoder& encoder() const { return *enc_; }

  std::vector<std::vector<double>>& dose_residuals() { return dose_residuals_; }
  const std::vector<std::vector<double>>& dose_residuals() const { return dose_residuals_; }

  /// Sum-form losses over all positions of equal-length trajectories:
  /// cross-entropy over indicator blocks plus dose MSE masked to
  /// nonzero-dose cells.
  struct ChunkLoss {
    Tape::NodeId ce_sum = -1;
    Tape::NodeId mse_sum = -1;
    std::size_t ce_cells = 0;
    std::size_t mse_cells = 0;
    Encoder::Pass pass;
  };
  ChunkLoss chunk_loss(Tape& tape, std::span<const Trajectory* const> units,
                       bool train_mode = false, Rng* dropout_rng = nullptr) const;

  /// Teacher-forced indicator probabilities over a whole trajectory:
  /// (T, 2*n_treat), row t conditioning on L_0..t and A_0..t-1.
  Tensor indicator_probs(const Trajectory& unit) const;

  /// Batched incremental state, one lane per Monte Carlo draw.
  class Session {
  public:
    Session(const PolicyModel& m, std::size_t lanes);
    void prime(const Trajectory& prefix, std::size_t cov_len);
    /// Appends position tau given committed covariates at tau and the
    /// previous action row, then returns indicator probabilities
    /// (lanes, 2*n_treat) and dose means (lanes, n_cont_treat, normalized).
    struct StepOut {
      Tensor indicator_probs;
      Tensor dose_means;
    };
    StepOut step(const Tensor& cov_rows, const Tensor& prev_treat_rows);

  private:
    Tensor encode_rows(const Tensor& cov_rows, const Tensor& prev_treat_rows) const;
    const PolicyModel& m_;
    std::size_t lanes_;
    std::vector<double> statics_;
    std::unique_ptr<EncoderCache> cache_;
  };

  std::unique_ptr<Session> make_session(std::size_t lanes) const {
    return std::make_unique<Session>(*this, lanes);
  }

  /// Indices of continuous treatment columns, in dose-head order.
  const std::vector<std::size_t>& dose_columns() const { return dose_cols_; }

private:
  Tensor assemble_inputs(const Trajectory& unit, std::size_t seq_len) const;

  Schema schema_;
  NormStats stats_;
  TransformerHyperparams hp_;
  std::unique_ptr<Encoder> enc_;
  std::vector<std::size_t> dose_cols_;
  std::vector<std::vector<double>> dose_residuals_; // per dose column, normalized units
};

} // namespace gcsim
