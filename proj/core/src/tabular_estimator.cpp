#include "gcsim/tabular_estimator.hpp"

#include "gcsim/errors.hpp"

#include <cmath>

namespace gcsim {

TabularMdpEstimator::TabularMdpEstimator(MdpSystem sys) : sys_(std::move(sys)) {
  sys_.validate();
  schema_ = sys_.make_schema();
  stats_.cov_mean.assign(schema_.n_cov(), 0.0);
  stats_.cov_std.assign(schema_.n_cov(), 1.0);
  stats_.treat_mean.assign(1, 0.0);
  stats_.treat_std.assign(1, 1.0);
}

std::vector<double> TabularMdpEstimator::joint_next(const double* cov_row, double action) const {
  std::size_t S = sys_.n_states();
  std::size_t s = sys_.state_index(cov_row);
  std::size_t a = action != 0.0 ? 1 : 0;
  const double* row = sys_.transition.data() + (a * S + s) * S;
  return std::vector<double>(row, row + S);
}

void TabularMdpEstimator::factor_probs(std::size_t d, const int* earlier, const double* cov_row,
                                       double action, double* out) const {
  std::vector<double> joint = joint_next(cov_row, action);
  std::size_t C = static_cast<std::size_t>(sys_.classes[d]);
  std::fill_n(out, C, 0.0);
  // Marginalize the joint over later covariates, conditioning on earlier
  // same-step classes.
  std::vector<double> buf(sys_.classes.size());
  double total = 0.0;
  for (std::size_t ns = 0; ns < joint.size(); ++ns) {
    if (joint[ns] == 0.0) continue;
    sys_.state_classes(ns, buf.data());
    bool match = true;
    for (std::size_t e = 0; e < d; ++e)
      if (static_cast<int>(std::lround(buf[e])) != earlier[e]) {
        match = false;
        break;
      }
    if (!match) continue;
    out[static_cast<std::size_t>(std::lround(buf[d]))] += joint[ns];
    total += joint[ns];
  }
  if (total <= 0.0)
    throw NumericalError("tabular estimator: conditioning event has probability zero");
  for (std::size_t c = 0; c < C; ++c) out[c] /= total;
}

ConditionalDensityEstimator::TeacherForced
TabularMdpEstimator::predict_teacher_forced(const Trajectory& unit) const {
  std::size_t T = unit.length();
  if (T < 2) throw DataError("tabular predict: trajectory too short");
  TeacherForced out;
  out.cat_probs = Tensor({T - 1, schema_.onehot_width()});
  std::vector<int> earlier(schema_.n_cat());
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = unit.cov.data() + (t - 1) * schema_.n_cov();
    double action = unit.treat.at(t - 1, 0);
    std::size_t c0 = 0;
    for (std::size_t d = 0; d < schema_.n_cat(); ++d) {
      for (std::size_t e = 0; e < d; ++e)
        earlier[e] = static_cast<int>(std::lround(unit.cov.at(t, e)));
      factor_probs(d, earlier.data(), prev, action,
                   out.cat_probs.data() + (t - 1) * schema_.onehot_width() + c0);
      c0 += static_cast<std::size_t>(schema_.covariates[d].classes);
    }
  }
  return out;
}

namespace {

class TabularRollout : public RolloutSession {
public:
  TabularRollout(const TabularMdpEstimator& m, std::size_t lanes) : m_(m), lanes_(lanes) {}

  void prime(const Trajectory& prefix, std::size_t cov_len) override {
    const Schema& sc = m_.schema();
    last_cov_ = Tensor({lanes_, sc.n_cov()});
    for (std::size_t l = 0; l < lanes_; ++l)
      std::copy_n(prefix.cov.data() + (cov_len - 1) * sc.n_cov(), sc.n_cov(),
                  last_cov_.data() + l * sc.n_cov());
  }

  void begin_step(const Tensor& treat_rows) override { pending_treat_ = treat_rows; }

  Tensor cat_probs(std::size_t d, const std::vector<int>& earlier) override {
    const Schema& sc = m_.schema();
    std::size_t C = static_cast<std::size_t>(sc.covariates[d].classes);
    Tensor out({lanes_, C});
    std::vector<int> lane_earlier(d);
    for (std::size_t l = 0; l < lanes_; ++l) {
      for (std::size_t e = 0; e < d; ++e) lane_earlier[e] = earlier[l * d + e];
      m_.factor_probs(d, lane_earlier.data(), last_cov_.data() + l * sc.n_cov(),
                      pending_treat_.at(l, 0), out.data() + l * C);
    }
    return out;
  }

  Tensor cont_means(const std::vector<int>&) override {
    throw DataError("tabular estimator has no continuous covariates");
  }

  void commit_covariates(const Tensor& cov_rows) override { last_cov_ = cov_rows; }
  std::size_t lanes() const override { return lanes_; }

private:
  const TabularMdpEstimator& m_;
  std::size_t lanes_;
  Tensor last_cov_, pending_treat_;
};

} // namespace

std::unique_ptr<RolloutSession> TabularMdpEstimator::make_rollout(std::size_t n_draws) const {
  return std::make_unique<TabularRollout>(*this, n_draws);
}

} // namespace gcsim
