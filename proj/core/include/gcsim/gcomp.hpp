#pragma once

#include "gcsim/estimator.hpp"
#include "gcsim/regime.hpp"
#include "gcsim/rng.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace gcsim {

/// Per-covariate empirical residual pools (observed minus predicted, in
/// normalized units) from teacher-forced one-step predictions on a holdout
/// set. Pools are shared across time steps.
struct ResidualBank {
  std::vector<std::vector<double>> pools; // one per continuous covariate
  std::vector<double> pool_means;         // diagnostic only, never enforced

  bool empty() const { return pools.empty(); }
};

/// Builds the bank over targets [first_target, T) of every holdout unit;
/// pool size is n_holdout * (T - first_target) per covariate.
ResidualBank build_residual_bank(const ConditionalDensityEstimator& est,
                                 std::span<const Trajectory> holdout, std::size_t first_target);

/// mean + a uniform draw (with replacement) from the pool. Normalized units.
double sample_continuous(double mean, std::span<const double> pool, Rng& rng);

/// Class draw from a probability vector.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

struct ClipBounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct SimulationConfig {
  std::size_t n_draws = 100; // M
  std::size_t start = 0;     // m: covariate rows [0, m) observed
  std::size_t horizon = 0;   // K: total trajectory length
  std::uint64_t seed = 0;
  bool store_draws = false;
  /// Optional physical clipping per covariate (raw units); disabled when
  /// empty. Applied to sampled continuous covariates only.
  std::vector<ClipBounds> clip;
  /// Draw one shared pool index per (lane, step) instead of independent
  /// indices per covariate, preserving cross-covariate residual coupling.
  bool joint_residual_draws = false;

  void validate() const;
};

/// Monte Carlo draws for one unit over times [m, K), plus their mean and
/// empirical (q05, q95) envelope per time step and covariate.
struct SimulationResult {
  std::string regime_id;
  std::uint64_t seed = 0;
  std::size_t start = 0, horizon = 0, n_draws = 0;
  Tensor mean, q05, q95;      // (K-m, n_cov) raw units
  std::vector<Tensor> draws;  // n_draws x (K-m, n_cov) if stored
  Tensor treatments;          // (K-m, n_treat): lane-0 actions, for inspection
};

/// One simulated transition (Algorithm-2 step): regime action at time t,
/// then categorical block sampled first, then continuous block via residual
/// bootstrap; the new covariates become row t+1. Exposed for oracle tests;
/// simulate_mc drives the same code over [m, K).
struct OneStepOut {
  Tensor actions;  // (lanes, n_treat)
  Tensor next_cov; // (lanes, n_cov)
};
OneStepOut simulate_one_step(RolloutSession& session, RolloutHistory& hist,
                             TreatmentRegime& regime, const ResidualBank& bank,
                             const ConditionalDensityEstimator& est, const SimulationConfig& cfg,
                             std::vector<Rng>& lane_rngs, std::size_t t);

/// M independent rollouts from the unit's observed prefix under the regime.
SimulationResult simulate_mc(const ConditionalDensityEstimator& est, const Trajectory& prefix,
                             TreatmentRegime& regime, const SimulationConfig& cfg,
                             const ResidualBank& bank, std::uint64_t unit_id = 0);

/// All units of a dataset, parallelized across units with per-unit seeds;
/// output order follows unit order regardless of thread scheduling.
std::vector<SimulationResult> simulate_dataset(const ConditionalDensityEstimator& est,
                                               const Dataset& data, TreatmentRegime& regime,
                                               const SimulationConfig& cfg,
                                               const ResidualBank& bank, int threads = 2);

} // namespace gcsim
