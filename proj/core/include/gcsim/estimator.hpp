#pragma once

#include "gcsim/schema.hpp"
#include "gcsim/tensor.hpp"

#include <memory>
#include <vector>

namespace gcsim {

/// Batched forward-simulation state for one unit: B parallel rollout lanes
/// that share the observed prefix and diverge as sampling proceeds.
///
/// Protocol per simulated step (pending target = covariate row tau+1, with
/// positions through tau committed):
///   1. begin_step(treatments at tau)       - completes the conditioning set
///   2. cat_probs(d, earlier) for each d    - factor-by-factor categorical
///   3. cont_means(full categorical block)  - continuous block conditionals
///   4. commit_covariates(sampled row tau+1)
/// prime() must be called once before the first step.
class RolloutSession {
public:
  virtual ~RolloutSession() = default;

  /// Loads the observed history: covariate rows [0, cov_len) and treatment
  /// rows [0, cov_len-1) of `prefix`; all lanes start identical.
  virtual void prime(const Trajectory& prefix, std::size_t cov_len) = 0;

  /// Treatment row for the current step, one row per lane (raw units).
  virtual void begin_step(const Tensor& treat_rows) = 0;

  /// Class probabilities of categorical covariate d for the pending step,
  /// conditioned on history and on sampled earlier categorical covariates
  /// of the same step (`earlier` is lane-major, width d). Shape (B, C_d).
  virtual Tensor cat_probs(std::size_t d, const std::vector<int>& earlier) = 0;

  /// Conditional means of the continuous block given the sampled categorical
  /// block (lane-major class indices, width n_cat). Normalized units.
  /// Shape (B, n_cont).
  virtual Tensor cont_means(const std::vector<int>& cat_block) = 0;

  /// Sampled covariate row tau+1 per lane (raw units).
  virtual void commit_covariates(const Tensor& cov_rows) = 0;

  virtual std::size_t lanes() const = 0;
};

/// Common contract of conditional-density models used by the Monte Carlo
/// engine: predict the next covariate vector factor-by-factor given history,
/// honoring the schema's simulation order (categorical block first).
class ConditionalDensityEstimator {
public:
  virtual ~ConditionalDensityEstimator() = default;

  virtual const Schema& schema() const = 0;
  virtual const NormStats& stats() const = 0;

  /// Teacher-forced one-step-ahead predictions over a whole trajectory:
  /// row i of each output corresponds to target time i+1 (0-indexed), for
  /// all targets 1..T-1. cat_probs is (T-1, onehot_width); cont_means is
  /// (T-1, n_cont) in normalized units. Either may be empty if the schema
  /// has no covariates of that kind.
  struct TeacherForced {
    Tensor cat_probs;
    Tensor cont_means;
  };
  virtual TeacherForced predict_teacher_forced(const Trajectory& unit) const = 0;

  /// Fresh batched rollout state with n_draws lanes.
  virtual std::unique_ptr<RolloutSession> make_rollout(std::size_t n_draws) const = 0;
};

/// Width of the standard feature encoding of one time position:
/// [one-hot categorical | z continuous | z treatments | z statics].
std::size_t feature_width(const Schema& schema);

/// Encodes one position into `dst` (length feature_width). `treat` may be a
/// different time's row than `cov` (the policy model conditions on the
/// previous action); `statics` may be null when the schema has none.
void encode_features(const Schema& schema, const NormStats& stats, const double* cov,
                     const double* treat, const double* statics, double* dst);

/// One-hot encoding of a categorical block given raw class values; `dst`
/// must have schema.onehot_width() entries.
void encode_onehot(const Schema& schema, const double* cov_or_classes, double* dst);

} // namespace gcsim
