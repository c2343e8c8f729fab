#pragma once

#include "gcsim/datagen_mdp.hpp"
#include "gcsim/estimator.hpp"

#include <memory>

namespace gcsim {

/// Conditional-density view of the tabular system's exact transition
/// kernel: the factor-by-factor conditionals are computed from the joint
/// next-state distribution, so Monte Carlo simulation through this
/// estimator targets the true g-formula exactly (up to sampling error).
class TabularMdpEstimator : public ConditionalDensityEstimator {
public:
  explicit TabularMdpEstimator(MdpSystem sys);

  const Schema& schema() const override { return schema_; }
  const NormStats& stats() const override { return stats_; }
  const MdpSystem& system() const { return sys_; }

  TeacherForced predict_teacher_forced(const Trajectory& unit) const override;
  std::unique_ptr<RolloutSession> make_rollout(std::size_t n_draws) const override;

  /// Joint next-state distribution given the current state row and action.
  std::vector<double> joint_next(const double* cov_row, double action) const;
  /// Conditional p(covariate d = c | earlier same-step classes, state, action).
  void factor_probs(std::size_t d, const int* earlier, const double* cov_row, double action,
                    double* out) const;

private:
  MdpSystem sys_;
  Schema schema_;
  NormStats stats_;
};

} // namespace gcsim
