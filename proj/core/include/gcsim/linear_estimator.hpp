#pragma once

#include "gcsim/estimator.hpp"

#include <iosfwd>
#include <memory>
#include <span>

namespace gcsim {

struct LinearConfig {
  std::size_t lag_window = 3;
  /// 0 requests plain OLS; a positive value forces ridge. When a plain
  /// solve hits a singular normal matrix the fit falls back to ridge and
  /// records the lambda it used.
  double ridge = 0.0;
  int logistic_iters = 200;
  double logistic_lr = 0.1;
};

/// GLM-per-covariate conditional density estimator over a fixed-width lag
/// window of history: multinomial logistic models for categorical
/// covariates (each conditioning on the same-step earlier categorical
/// values, per the factorization order) and least-squares models for
/// continuous covariates (conditioning on the full same-step categorical
/// block). Baseline counterpart of the transformer behind the same
/// interface.
class LinearEstimator : public ConditionalDensityEstimator {
public:
  LinearEstimator(Schema schema, NormStats stats, LinearConfig cfg);

  const Schema& schema() const override { return schema_; }
  const NormStats& stats() const override { return stats_; }
  TeacherForced predict_teacher_forced(const Trajectory& unit) const override;
  std::unique_ptr<RolloutSession> make_rollout(std::size_t n_draws) const override;

  const LinearConfig& config() const { return cfg_; }
  /// Ridge lambda actually applied to the continuous solve (0 = plain OLS).
  double ridge_used() const { return ridge_used_; }

  /// Width of one encoded lag row: [one-hot cats | z conts | z treats].
  std::size_t lag_width() const;
  /// Base feature count: lag_window rows + statics + intercept.
  std::size_t base_features() const;

  void fit(std::span<const Trajectory> units);

  /// Raw weight persistence for checkpoints.
  void serialize_weights(std::ofstream& os) const;
  void deserialize_weights(std::ifstream& is);

  /// Probabilities of categorical covariate d given base features and
  /// observed/sampled earlier same-step classes.
  void cat_probs_row(std::size_t d, const double* base, const int* earlier, double* out) const;
  /// Normalized means of all continuous covariates given base features and
  /// the same-step categorical block.
  void cont_means_row(const double* base, const int* cat_block, double* out) const;
  /// Encodes one (cov,treat) row into dst (lag_width entries).
  void encode_lag_row(const double* cov, const double* treat, double* dst) const;
  /// Assembles base features for target time t of a trajectory into dst
  /// (base_features entries); missing lags before time 0 are zero.
  void base_features_for(const Trajectory& unit, std::size_t t, double* dst) const;

private:
  friend class LinearRollout;
  Schema schema_;
  NormStats stats_;
  LinearConfig cfg_;
  double ridge_used_ = 0.0;
  // Per categorical covariate d: (base_features + earlier_onehot_width) x C_d.
  std::vector<Tensor> cat_weights_;
  // (base_features + onehot_width) x n_cont.
  Tensor cont_weights_;
};

/// Fits the baseline on a training split (targets are all steps from the
/// second one on, matching the transformer's training convention).
std::unique_ptr<LinearEstimator> fit_linear_gcomp(std::span<const Trajectory> units, Schema schema,
                                                  NormStats stats, LinearConfig cfg = {});

} // namespace gcsim
