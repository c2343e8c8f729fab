#pragma once

#include "gcsim/optim.hpp"
#include "gcsim/policy.hpp"
#include "gcsim/transformer_estimator.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace gcsim {

struct TrainConfig {
  int max_epochs = 50;
  int patience = 10;
  int batch_size = 16;
  double base_lr = 1e-4;
  CosineRestartSchedule schedule{1e-4, 1e-5, 10};
  std::uint64_t seed = 0;
  /// First predicted target time (0-indexed). Training treats every step
  /// from this one on as an independent one-step prediction problem.
  int first_target = 1;
  /// Expected horizon; 0 means "whatever the data has". When set, trajectory
  /// lengths must equal it.
  int horizon = 0;
  int threads = 2;
  Adam::Config adam{};

  void validate(std::size_t traj_len) const;
};

/// Mean cross-entropy over (unit, covariate, time) cells:
/// sum of -log p_true divided by the cell count. probs rows are target
/// cells; each categorical covariate contributes one block of columns.
double loss_ce(const Tensor& probs, const Tensor& onehot, std::size_t n_covariates);
/// Mean squared error over all cells.
double loss_mse(const Tensor& pred, const Tensor& target);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_ce = 0.0, train_mse = 0.0, train_total = 0.0;
  double val_ce = 0.0, val_mse = 0.0, val_total = 0.0;
  bool is_best = false;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val = 0.0;
  long ce_clamp_hits = 0;
  std::uint64_t digest() const;
};

/// Anything trainable by the shared loop: one or more parameter sets plus a
/// chunk runner able to compute (and optionally backpropagate) losses.
struct Trainable {
  std::vector<ParamSet*> param_sets;
  /// Per-unit loss cell counts (ce, mse) used to normalize batch losses.
  std::function<std::pair<std::size_t, std::size_t>(const Trajectory&)> cells;
  /// Builds the chunk's losses; when sinks is non-null, also runs backward
  /// and accumulates parameter gradients into sinks (aligned to param_sets).
  /// Returns (ce_sum, mse_sum, ce_cells, mse_cells, clamp_hits).
  struct ChunkOut {
    double ce_sum = 0.0, mse_sum = 0.0;
    std::size_t ce_cells = 0, mse_cells = 0;
    long clamp_hits = 0;
  };
  std::function<ChunkOut(std::span<const Trajectory* const>, bool train_mode,
                         std::uint64_t dropout_seed, double ce_scale, double mse_scale,
                         std::vector<std::vector<Tensor>>* sinks)>
      run_chunk;
};

/// Shared epoch loop: seeded shuffling, fixed-chunk threading with
/// deterministic gradient reduction, one Adam per parameter set, cosine
/// warm-restart schedule, early stopping on validation total loss,
/// best-validation parameter restore. Aborts with NumericalError on a
/// non-finite loss.
TrainLog train_loop(Trainable& model, std::span<const Trajectory> train_units,
                    std::span<const Trajectory> val_units, const TrainConfig& cfg);

/// Joint training of both encoders by minimizing the unweighted sum of the
/// categorical cross-entropy and continuous MSE (1:1; no weighting is
/// specified by the protocol this follows).
TrainLog train(TransformerEstimator& model, std::span<const Trajectory> train_units,
               std::span<const Trajectory> val_units, const TrainConfig& cfg);

/// Fits the observational treatment mechanism on a dataset and builds its
/// dose residual pools from the validation split.
TrainLog fit_observational_policy(PolicyModel& policy, std::span<const Trajectory> train_units,
                                  std::span<const Trajectory> val_units, const TrainConfig& cfg);

} // namespace gcsim
