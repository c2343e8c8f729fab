#include "gcsim/regime.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gcsim {

RolloutHistory::RolloutHistory(std::size_t lanes, std::size_t capacity, std::size_t n_cov,
                               std::size_t n_treat)
    : lanes_(lanes), capacity_(capacity), n_cov_(n_cov), n_treat_(n_treat),
      cov_(lanes * capacity * n_cov, 0.0), treat_(lanes * capacity * n_treat, 0.0) {}

void RolloutHistory::init_from_prefix(const Trajectory& prefix, std::size_t cov_len) {
  if (cov_len < 1 || cov_len > prefix.length() || cov_len > capacity_)
    throw DataError("rollout history: bad prefix length");
  statics_ = prefix.statics;
  for (std::size_t l = 0; l < lanes_; ++l) {
    std::copy_n(prefix.cov.data(), cov_len * n_cov_, cov_.data() + l * capacity_ * n_cov_);
    if (cov_len >= 2)
      std::copy_n(prefix.treat.data(), (cov_len - 1) * n_treat_,
                  treat_.data() + l * capacity_ * n_treat_);
  }
  cov_len_ = cov_len;
  treat_len_ = cov_len - 1;
}

const double* RolloutHistory::cov_row(std::size_t lane, std::size_t t) const {
  return cov_.data() + (lane * capacity_ + t) * n_cov_;
}

const double* RolloutHistory::treat_row(std::size_t lane, std::size_t t) const {
  return treat_.data() + (lane * capacity_ + t) * n_treat_;
}

void RolloutHistory::push_cov(const Tensor& rows) {
  if (cov_len_ >= capacity_) throw DataError("rollout history: covariate capacity exceeded");
  for (std::size_t l = 0; l < lanes_; ++l)
    std::copy_n(rows.data() + l * n_cov_, n_cov_, cov_.data() + (l * capacity_ + cov_len_) * n_cov_);
  ++cov_len_;
}

void RolloutHistory::push_treat(const Tensor& rows) {
  if (treat_len_ >= capacity_) throw DataError("rollout history: treatment capacity exceeded");
  for (std::size_t l = 0; l < lanes_; ++l)
    std::copy_n(rows.data() + l * n_treat_, n_treat_,
                treat_.data() + (l * capacity_ + treat_len_) * n_treat_);
  ++treat_len_;
}

void TreatmentRegime::begin(const Trajectory&, std::size_t, std::size_t, std::uint64_t) {}

StaticSequenceRegime::StaticSequenceRegime(std::string id, std::size_t start, Tensor rows)
    : id_(std::move(id)), start_(start), rows_(std::move(rows)) {
  if (rows_.rows() == 0) throw DataError("static regime: empty action window");
}

Tensor StaticSequenceRegime::actions(const RolloutHistory& hist, std::size_t t) {
  if (t < start_) throw DataError("static regime '" + id_ + "' queried before its window");
  std::size_t idx = std::min(t - start_, rows_.rows() - 1);
  Tensor out({hist.lanes(), hist.n_treat()});
  for (std::size_t l = 0; l < hist.lanes(); ++l)
    std::copy_n(rows_.data() + idx * hist.n_treat(), hist.n_treat(),
                out.data() + l * hist.n_treat());
  return out;
}

Tensor WithholdRegime::actions(const RolloutHistory& hist, std::size_t) {
  return Tensor({hist.lanes(), hist.n_treat()});
}

void rule_actions_row(const RuleSpec& spec, const double* cov, double* out,
                      std::size_t n_treat) {
  for (std::size_t j = 0; j < n_treat; ++j) {
    const auto& r = spec.treatments[j];
    out[j] = 0.0;
    bool fire = r.conditions.empty();
    for (const auto& c : r.conditions) {
      double v = cov[c.cov];
      if (c.below ? (v < c.threshold) : (v > c.threshold)) {
        fire = true;
        break;
      }
    }
    if (!fire) continue;
    double dose = r.dose_intercept;
    for (const auto& [c, w] : r.dose_terms) dose += w * cov[c];
    out[j] = std::clamp(dose, r.dose_min, r.dose_max);
  }
}

Tensor RuleBasedRegime::actions(const RolloutHistory& hist, std::size_t t) {
  if (spec_.treatments.size() != hist.n_treat())
    throw DataError("rule regime '" + id_ + "': spec covers " +
                    std::to_string(spec_.treatments.size()) + " treatments, history has " +
                    std::to_string(hist.n_treat()));
  Tensor out({hist.lanes(), hist.n_treat()});
  for (std::size_t l = 0; l < hist.lanes(); ++l)
    rule_actions_row(spec_, hist.cov_row(l, t), out.data() + l * hist.n_treat(),
                     hist.n_treat());
  return out;
}

void StochasticPolicyRegime::begin(const Trajectory& prefix, std::size_t cov_len,
                                   std::size_t lanes, std::uint64_t seed) {
  session_ = policy_->make_session(lanes);
  session_->prime(prefix, cov_len);
  lane_rngs_.clear();
  for (std::size_t l = 0; l < lanes; ++l)
    lane_rngs_.emplace_back(derive_seed(seed, "policy.lane", l));
}

Tensor StochasticPolicyRegime::actions(const RolloutHistory& hist, std::size_t t) {
  if (!session_) throw DataError("policy regime: begin() was not called");
  const Schema& sc = policy_->schema();
  std::size_t L = hist.lanes(), nt = sc.n_treat();
  Tensor cov_rows({L, sc.n_cov()}), prev_treat({L, nt});
  for (std::size_t l = 0; l < L; ++l) {
    std::copy_n(hist.cov_row(l, t), sc.n_cov(), cov_rows.data() + l * sc.n_cov());
    if (t > 0) std::copy_n(hist.treat_row(l, t - 1), nt, prev_treat.data() + l * nt);
  }
  auto step = session_->step(cov_rows, prev_treat);
  const auto& pools = policy_->dose_residuals();
  Tensor out({L, nt});
  for (std::size_t l = 0; l < L; ++l) {
    Rng& rng = lane_rngs_[l];
    std::size_t dk = 0;
    for (std::size_t j = 0; j < nt; ++j) {
      double p_taken = step.indicator_probs.at(l, 2 * j + 1);
      bool taken = rng.bernoulli(p_taken);
      if (sc.treatments[j].kind == VarKind::Categorical) {
        out.at(l, j) = taken ? 1.0 : 0.0;
      } else {
        double dose = 0.0;
        if (taken) {
          double z = step.dose_means.at(l, dk);
          const auto& pool = pools[dk];
          if (!pool.empty()) z += pool[rng.index(pool.size())];
          dose = std::max(0.0, z * policy_->stats().treat_std[j] + policy_->stats().treat_mean[j]);
        }
        out.at(l, j) = dose;
      }
      if (sc.treatments[j].kind == VarKind::Continuous) ++dk;
    }
  }
  return out;
}

} // namespace gcsim
