#pragma once

#include "gcsim/policy.hpp"
#include "gcsim/rng.hpp"
#include "gcsim/schema.hpp"
#include "gcsim/tensor.hpp"

#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace gcsim {

/// Per-lane raw history buffers maintained by the simulation engine.
/// Covariate rows [0, cov_len) and treatment rows [0, treat_len) are
/// committed; regimes read them to evaluate H_t.
class RolloutHistory {
public:
  RolloutHistory(std::size_t lanes, std::size_t capacity, std::size_t n_cov, std::size_t n_treat);

  void init_from_prefix(const Trajectory& prefix, std::size_t cov_len);

  std::size_t lanes() const { return lanes_; }
  std::size_t cov_len() const { return cov_len_; }
  std::size_t treat_len() const { return treat_len_; }
  std::size_t n_cov() const { return n_cov_; }
  std::size_t n_treat() const { return n_treat_; }
  const std::vector<double>& statics() const { return statics_; }

  const double* cov_row(std::size_t lane, std::size_t t) const;
  const double* treat_row(std::size_t lane, std::size_t t) const;

  /// Appends covariate rows (lanes x n_cov) at time cov_len.
  void push_cov(const Tensor& rows);
  /// Appends treatment rows (lanes x n_treat) at time treat_len.
  void push_treat(const Tensor& rows);
  /// Backtracking support for exact path enumeration.
  void pop_cov() { --cov_len_; }
  void pop_treat() { --treat_len_; }

private:
  std::size_t lanes_, capacity_, n_cov_, n_treat_;
  std::size_t cov_len_ = 0, treat_len_ = 0;
  std::vector<double> cov_, treat_; // (lane, t, col)
  std::vector<double> statics_;
};

/// A dynamic treatment strategy: one function per time point mapping the
/// history H_t (covariates through t, treatments through t-1) to the action
/// at t. Deterministic unless stated otherwise.
class TreatmentRegime {
public:
  virtual ~TreatmentRegime() = default;
  virtual std::string id() const = 0;
  /// Called once per unit before stepping. Stochastic regimes seed their
  /// internal draws from `seed`; deterministic regimes ignore it.
  virtual void begin(const Trajectory& prefix, std::size_t cov_len, std::size_t lanes,
                     std::uint64_t seed);
  /// Action rows (lanes x n_treat, raw units) for time t.
  virtual Tensor actions(const RolloutHistory& hist, std::size_t t) = 0;
  /// Whether actions are a deterministic function of history (required by
  /// exact enumeration).
  virtual bool deterministic() const { return true; }
  /// Fresh instance with the same definition and no per-unit state, for
  /// parallel simulation workers.
  virtual std::unique_ptr<TreatmentRegime> clone() const = 0;
};

/// Fixed action rows for times [start, start+rows); later times repeat the
/// last row.
class StaticSequenceRegime : public TreatmentRegime {
public:
  StaticSequenceRegime(std::string id, std::size_t start, Tensor rows);
  std::string id() const override { return id_; }
  Tensor actions(const RolloutHistory& hist, std::size_t t) override;
  std::unique_ptr<TreatmentRegime> clone() const override {
    return std::make_unique<StaticSequenceRegime>(*this);
  }

private:
  std::string id_;
  std::size_t start_;
  Tensor rows_; // (window, n_treat)
};

/// Always the zero action.
class WithholdRegime : public TreatmentRegime {
public:
  explicit WithholdRegime(std::string id = "withhold") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  Tensor actions(const RolloutHistory& hist, std::size_t t) override;
  std::unique_ptr<TreatmentRegime> clone() const override {
    return std::make_unique<WithholdRegime>(*this);
  }

private:
  std::string id_;
};

/// Threshold rule per treatment: fire when a covariate crosses a threshold,
/// with a dose that is affine in current covariates, clipped to bounds.
struct RuleSpec {
  struct Condition {
    std::size_t cov = 0;
    bool below = true;
    double threshold = 0.0;
  };
  struct PerTreatment {
    std::vector<Condition> conditions; // fire when ANY condition holds
    double dose_intercept = 1.0;
    std::vector<std::pair<std::size_t, double>> dose_terms; // (covariate, coefficient)
    double dose_min = 0.0;
    double dose_max = std::numeric_limits<double>::infinity();
  };
  std::vector<PerTreatment> treatments;
};

/// Evaluates a rule spec on one raw covariate row; out gets n_treat doses.
void rule_actions_row(const RuleSpec& spec, const double* cov, double* out, std::size_t n_treat);

class RuleBasedRegime : public TreatmentRegime {
public:
  RuleBasedRegime(std::string id, RuleSpec spec) : id_(std::move(id)), spec_(std::move(spec)) {}
  std::string id() const override { return id_; }
  Tensor actions(const RolloutHistory& hist, std::size_t t) override;
  std::unique_ptr<TreatmentRegime> clone() const override {
    return std::make_unique<RuleBasedRegime>(id_, spec_);
  }
  const RuleSpec& spec() const { return spec_; }

private:
  std::string id_;
  RuleSpec spec_;
};

/// Learned stochastic policy: samples each treatment's indicator from the
/// fitted probabilities, then (for dose columns) adds a residual draw to the
/// conditional dose mean. Mirrors the observational mechanism.
class StochasticPolicyRegime : public TreatmentRegime {
public:
  StochasticPolicyRegime(std::string id, std::shared_ptr<const PolicyModel> policy)
      : id_(std::move(id)), policy_(std::move(policy)) {}
  std::string id() const override { return id_; }
  void begin(const Trajectory& prefix, std::size_t cov_len, std::size_t lanes,
             std::uint64_t seed) override;
  Tensor actions(const RolloutHistory& hist, std::size_t t) override;
  bool deterministic() const override { return false; }
  std::unique_ptr<TreatmentRegime> clone() const override {
    return std::make_unique<StochasticPolicyRegime>(id_, policy_);
  }

private:
  std::string id_;
  std::shared_ptr<const PolicyModel> policy_;
  std::unique_ptr<PolicyModel::Session> session_;
  std::vector<Rng> lane_rngs_;
};

} // namespace gcsim
