#include "gcsim/gcomp.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace gcsim {

ResidualBank build_residual_bank(const ConditionalDensityEstimator& est,
                                 std::span<const Trajectory> holdout, std::size_t first_target) {
  if (holdout.empty()) throw DataError("residual bank: empty holdout set");
  const Schema& sc = est.schema();
  ResidualBank bank;
  bank.pools.resize(sc.n_cont());
  std::size_t off = sc.cont_offset();
  for (const auto& u : holdout) {
    if (u.length() <= first_target)
      throw DataError("residual bank: trajectory shorter than first target");
    auto pred = est.predict_teacher_forced(u);
    for (std::size_t t = first_target; t < u.length(); ++t)
      for (std::size_t d = 0; d < sc.n_cont(); ++d) {
        double observed = est.stats().z_cov(off + d, u.cov.at(t, off + d));
        bank.pools[d].push_back(observed - pred.cont_means.at(t - 1, d));
      }
  }
  bank.pool_means.resize(sc.n_cont(), 0.0);
  for (std::size_t d = 0; d < sc.n_cont(); ++d) {
    double s = 0.0;
    for (double r : bank.pools[d]) s += r;
    bank.pool_means[d] = bank.pools[d].empty() ? 0.0 : s / static_cast<double>(bank.pools[d].size());
  }
  return bank;
}

double sample_continuous(double mean, std::span<const double> pool, Rng& rng) {
  if (pool.empty()) throw DataError("sample_continuous: empty residual pool");
  return mean + pool[rng.index(pool.size())];
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  return rng.categorical(probs);
}

void SimulationConfig::validate() const {
  if (n_draws < 1) throw UsageError("simulation: n_draws must be >= 1");
  if (start > horizon) throw UsageError("simulation: start must not exceed horizon");
}

OneStepOut simulate_one_step(RolloutSession& session, RolloutHistory& hist,
                             TreatmentRegime& regime, const ResidualBank& bank,
                             const ConditionalDensityEstimator& est, const SimulationConfig& cfg,
                             std::vector<Rng>& lane_rngs, std::size_t t) {
  const Schema& sc = est.schema();
  std::size_t L = hist.lanes();
  OneStepOut out;
  out.actions = regime.actions(hist, t);
  if (!out.actions.all_finite()) throw NumericalError("simulate: regime produced non-finite action");
  hist.push_treat(out.actions);
  session.begin_step(out.actions);

  out.next_cov = Tensor({L, sc.n_cov()});
  // Categorical block first, factor by factor, feeding sampled classes back
  // into the conditioning set.
  std::vector<int> sampled(L * sc.n_cat(), 0);
  for (std::size_t d = 0; d < sc.n_cat(); ++d) {
    std::vector<int> earlier(L * d);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t e = 0; e < d; ++e) earlier[l * d + e] = sampled[l * sc.n_cat() + e];
    Tensor probs = session.cat_probs(d, earlier);
    if (!probs.all_finite())
      throw NumericalError("simulate: estimator produced non-finite probabilities at t=" +
                           std::to_string(t));
    std::size_t C = probs.cols();
    for (std::size_t l = 0; l < L; ++l) {
      std::size_t cls = lane_rngs[l].categorical(std::span<const double>(probs.data() + l * C, C));
      sampled[l * sc.n_cat() + d] = static_cast<int>(cls);
      out.next_cov.at(l, d) = static_cast<double>(cls);
    }
  }
  // Continuous block: conditional means plus residual bootstrap draws.
  if (sc.n_cont() > 0) {
    std::vector<int> cat_block(sampled.begin(), sampled.end());
    Tensor means = session.cont_means(cat_block);
    if (!means.all_finite())
      throw NumericalError("simulate: estimator produced non-finite means at t=" +
                           std::to_string(t));
    std::size_t off = sc.cont_offset();
    for (std::size_t l = 0; l < L; ++l) {
      Rng& rng = lane_rngs[l];
      std::size_t joint_idx = 0;
      if (cfg.joint_residual_draws && !bank.pools.empty() && !bank.pools[0].empty())
        joint_idx = rng.index(bank.pools[0].size());
      for (std::size_t d = 0; d < sc.n_cont(); ++d) {
        const auto& pool = bank.pools[d];
        if (pool.empty()) throw DataError("simulate: empty residual pool for covariate " +
                                          sc.covariates[off + d].name);
        double z = cfg.joint_residual_draws ? means.at(l, d) + pool[joint_idx % pool.size()]
                                            : sample_continuous(means.at(l, d), pool, rng);
        double raw = est.stats().un_z_cov(off + d, z);
        if (!cfg.clip.empty()) raw = std::clamp(raw, cfg.clip[off + d].lo, cfg.clip[off + d].hi);
        out.next_cov.at(l, off + d) = raw;
      }
    }
  }
  hist.push_cov(out.next_cov);
  session.commit_covariates(out.next_cov);
  return out;
}

SimulationResult simulate_mc(const ConditionalDensityEstimator& est, const Trajectory& prefix,
                             TreatmentRegime& regime, const SimulationConfig& cfg,
                             const ResidualBank& bank, std::uint64_t unit_id) {
  cfg.validate();
  const Schema& sc = est.schema();
  std::size_t m = cfg.start, K = cfg.horizon, M = cfg.n_draws;
  if (prefix.length() < m) throw DataError("simulate: prefix shorter than start time");
  if (!cfg.clip.empty() && cfg.clip.size() != sc.n_cov())
    throw UsageError("simulate: clip bounds must cover every covariate");

  SimulationResult res;
  res.regime_id = regime.id();
  res.seed = cfg.seed;
  res.start = m;
  res.horizon = K;
  res.n_draws = M;
  std::size_t steps = K > m ? K - m : 0;
  res.mean = Tensor({steps, sc.n_cov()});
  res.q05 = Tensor({steps, sc.n_cov()});
  res.q95 = Tensor({steps, sc.n_cov()});
  res.treatments = Tensor({steps, sc.n_treat()});
  if (steps == 0) return res;

  auto session = est.make_rollout(M);
  session->prime(prefix, m);
  RolloutHistory hist(M, K, sc.n_cov(), sc.n_treat());
  hist.init_from_prefix(prefix, m);
  regime.begin(prefix, m, M, derive_seed(cfg.seed, "regime", unit_id));

  std::vector<Rng> lane_rngs;
  lane_rngs.reserve(M);
  for (std::size_t d = 0; d < M; ++d)
    lane_rngs.emplace_back(derive_seed(cfg.seed, "draw", unit_id, d));

  // Draw storage: (step, lane, cov) while rolling; reshaped on output.
  std::vector<double> all(steps * M * sc.n_cov());
  for (std::size_t t = m; t < K; ++t) {
    OneStepOut step;
    try {
      step = simulate_one_step(*session, hist, regime, bank, est, cfg, lane_rngs, t - 1);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (unit " + std::to_string(unit_id) + ")");
    }
    std::copy_n(step.next_cov.data(), M * sc.n_cov(), all.data() + (t - m) * M * sc.n_cov());
    for (std::size_t j = 0; j < sc.n_treat(); ++j)
      res.treatments.at(t - m, j) = step.actions.at(0, j);
  }

  // Mean is the exact arithmetic mean of the draws; quantiles use linearly
  // interpolated order statistics.
  std::vector<double> buf(M);
  for (std::size_t s = 0; s < steps; ++s)
    for (std::size_t j = 0; j < sc.n_cov(); ++j) {
      double sum = 0.0;
      for (std::size_t l = 0; l < M; ++l) {
        buf[l] = all[(s * M + l) * sc.n_cov() + j];
        sum += buf[l];
      }
      res.mean.at(s, j) = sum / static_cast<double>(M);
      std::sort(buf.begin(), buf.end());
      auto quant = [&](double p) {
        double idx = p * static_cast<double>(M - 1);
        std::size_t lo = static_cast<std::size_t>(idx);
        double frac = idx - static_cast<double>(lo);
        return lo + 1 < M ? buf[lo] * (1.0 - frac) + buf[lo + 1] * frac : buf[lo];
      };
      res.q05.at(s, j) = quant(0.05);
      res.q95.at(s, j) = quant(0.95);
    }
  if (cfg.store_draws) {
    res.draws.reserve(M);
    for (std::size_t l = 0; l < M; ++l) {
      Tensor d({steps, sc.n_cov()});
      for (std::size_t s = 0; s < steps; ++s)
        std::copy_n(all.data() + (s * M + l) * sc.n_cov(), sc.n_cov(),
                    d.data() + s * sc.n_cov());
      res.draws.push_back(std::move(d));
    }
  }
  return res;
}

std::vector<SimulationResult> simulate_dataset(const ConditionalDensityEstimator& est,
                                               const Dataset& data, TreatmentRegime& regime,
                                               const SimulationConfig& cfg,
                                               const ResidualBank& bank, int threads) {
  std::vector<SimulationResult> out(data.size());
  int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(data.size())));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < data.size(); ++i)
      out[i] = simulate_mc(est, data.units[i], regime, cfg, bank, i);
    return out;
  }
  // Regimes carry per-unit state (policy sessions, lane rngs), so each
  // worker drives its own clone; results land in per-unit slots and every
  // unit's draws depend only on (seed, unit id), not on scheduling.
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&](TreatmentRegime* my_regime) {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= data.size()) break;
      try {
        out[i] = simulate_mc(est, data.units[i], *my_regime, cfg, bank, i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!error) error = std::current_exception();
        break;
      }
    }
  };
  std::vector<std::unique_ptr<TreatmentRegime>> clones;
  for (int w = 1; w < n_workers; ++w) clones.push_back(regime.clone());
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker, clones[w - 1].get());
  worker(&regime);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

} // namespace gcsim
