#include "gcsim/datagen_tumor.hpp"

#include "gcsim/errors.hpp"
#include "gcsim/rng.hpp"

#include <algorithm>
#include <cmath>

namespace gcsim {

namespace {

enum NoiseChannel : std::uint64_t {
  kGrowthNoise = 1,
  kPolicyChemo = 2,
  kPolicyRadio = 3,
  kUnitGrowth = 10,
  kUnitChemoEffect = 11,
  kUnitRadioAlpha = 12,
  kUnitInit = 13,
};

struct UnitParams {
  double rho, beta_c, alpha_r, beta_r, v0;
};

UnitParams draw_unit_params(const TumorSimConfig& cfg, std::size_t unit) {
  UnitParams p;
  p.rho = std::max(0.01, cfg.growth_mean +
                             cfg.growth_sd * keyed_normal(cfg.seed, unit, 0, kUnitGrowth));
  p.beta_c = std::max(0.0, cfg.chemo_effect_mean +
                               cfg.chemo_effect_sd * keyed_normal(cfg.seed, unit, 0, kUnitChemoEffect));
  p.alpha_r = std::max(0.0, cfg.radio_alpha_mean +
                                cfg.radio_alpha_sd * keyed_normal(cfg.seed, unit, 0, kUnitRadioAlpha));
  p.beta_r = p.alpha_r / cfg.radio_beta_ratio;
  p.v0 = std::clamp(std::exp(cfg.init_log_mean +
                             cfg.init_log_sd * keyed_normal(cfg.seed, unit, 0, kUnitInit)),
                    1.0, 0.5 * cfg.max_volume);
  return p;
}

double treat_probability(const TumorSimConfig& cfg, double gamma, double recent_mean_volume) {
  double x = gamma * (recent_mean_volume / cfg.max_volume - cfg.policy_center_frac);
  return 1.0 / (1.0 + std::exp(-x));
}

// -1 = observational policy throughout; otherwise a static (chemo, radio)
// pair applied from the switch action onward.
struct RegimeOverride {
  bool active = false;
  double chemo = 0.0, radio = 0.0;
};

Trajectory simulate_unit(const TumorSimConfig& cfg, std::size_t unit, const RegimeOverride& ovr) {
  UnitParams p = draw_unit_params(cfg, unit);
  std::size_t K = cfg.horizon;
  Trajectory traj;
  traj.cov = Tensor({K, 1});
  traj.treat = Tensor({K, 2});
  double v = p.v0;
  double conc = 0.0;
  std::size_t switch_action = cfg.switch_time() - 1; // first overridden action row
  for (std::size_t t = 0; t < K; ++t) {
    traj.cov.at(t, 0) = v;
    double a_chemo, a_radio;
    if (ovr.active && t >= switch_action) {
      a_chemo = ovr.chemo;
      a_radio = ovr.radio;
    } else {
      std::size_t w = std::min<std::size_t>(cfg.policy_window, t + 1);
      double mean_v = 0.0;
      for (std::size_t k = 0; k < w; ++k) mean_v += traj.cov.at(t - k, 0);
      mean_v /= static_cast<double>(w);
      a_chemo = keyed_uniform(cfg.seed, unit, t, kPolicyChemo) <
                        treat_probability(cfg, cfg.policy_gamma, mean_v)
                    ? 1.0
                    : 0.0;
      a_radio = keyed_uniform(cfg.seed, unit, t, kPolicyRadio) <
                        treat_probability(cfg, cfg.policy_gamma, mean_v)
                    ? 1.0
                    : 0.0;
    }
    traj.treat.at(t, 0) = a_chemo;
    traj.treat.at(t, 1) = a_radio;

    conc = cfg.chemo_decay * conc + cfg.chemo_dose * a_chemo;
    double d = cfg.radio_dose * a_radio;
    double eps = cfg.noise_sd * keyed_normal(cfg.seed, unit, t, kGrowthNoise);
    double rel = 1.0 + p.rho * std::log(cfg.max_volume / std::max(v, 1e-3)) - p.beta_c * conc -
                 (p.alpha_r * d + p.beta_r * d * d) + eps;
    v = std::clamp(v * rel, 0.0, cfg.max_volume);
  }
  return traj;
}

const RegimeOverride& regime_override(const std::string& id) {
  static const RegimeOverride obs{};
  static const RegimeOverride none{true, 0.0, 0.0};
  static const RegimeOverride radio{true, 0.0, 1.0};
  static const RegimeOverride chemo{true, 1.0, 0.0};
  static const RegimeOverride both{true, 1.0, 1.0};
  if (id == "observational") return obs;
  if (id == "no_treat") return none;
  if (id == "radio_only") return radio;
  if (id == "chemo_only") return chemo;
  if (id == "chemo_radio") return both;
  throw DataError("unknown tumor regime '" + id + "'");
}

} // namespace

Schema tumor_schema() {
  Schema sc;
  sc.covariates.push_back({"volume", VarKind::Continuous, 0});
  sc.treatments.push_back({"chemo", VarKind::Categorical});
  sc.treatments.push_back({"radio", VarKind::Categorical});
  sc.outcome_index = 0;
  sc.validate();
  return sc;
}

Dataset gen_tumor_observational(const TumorSimConfig& cfg, std::size_t unit_begin,
                                std::size_t n_units) {
  Dataset ds;
  ds.schema = tumor_schema();
  ds.meta.generator = "tumor";
  ds.meta.seed = cfg.seed;
  ds.meta.regime_id = "observational";
  ds.meta.switch_time = static_cast<int>(cfg.switch_time());
  RegimeOverride obs{};
  for (std::size_t u = 0; u < n_units; ++u)
    ds.units.push_back(simulate_unit(cfg, unit_begin + u, obs));
  ds.stats = compute_norm_stats(ds.schema, ds.units);
  return ds;
}

Dataset gen_tumor_counterfactual(const TumorSimConfig& cfg, std::size_t unit_begin,
                                 std::size_t n_units, const std::string& regime_id) {
  const RegimeOverride& ovr = regime_override(regime_id);
  if (!ovr.active) throw DataError("gen_tumor_counterfactual: pass a counterfactual regime id");
  Dataset ds;
  ds.schema = tumor_schema();
  ds.meta.generator = "tumor";
  ds.meta.seed = cfg.seed;
  ds.meta.regime_id = regime_id;
  ds.meta.switch_time = static_cast<int>(cfg.switch_time());
  for (std::size_t u = 0; u < n_units; ++u)
    ds.units.push_back(simulate_unit(cfg, unit_begin + u, ovr));
  ds.stats = compute_norm_stats(ds.schema, ds.units);
  return ds;
}

std::unique_ptr<TreatmentRegime> tumor_regime(const TumorSimConfig& cfg,
                                              const std::string& regime_id) {
  const RegimeOverride& ovr = regime_override(regime_id);
  if (!ovr.active) throw DataError("tumor_regime: pass a counterfactual regime id");
  Tensor row({1, 2});
  row[0] = ovr.chemo;
  row[1] = ovr.radio;
  return std::make_unique<StaticSequenceRegime>(regime_id, cfg.switch_time() - 1, std::move(row));
}

const std::vector<std::string>& tumor_regime_ids() {
  static const std::vector<std::string> ids = {"no_treat", "radio_only", "chemo_only",
                                               "chemo_radio"};
  return ids;
}

} // namespace gcsim
