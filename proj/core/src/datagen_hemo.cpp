#include "gcsim/datagen_hemo.hpp"

#include "gcsim/errors.hpp"
#include "gcsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gcsim {

namespace {

enum Channel : std::uint64_t {
  kTbv = 1, kTpr, kHr, kAq, kCvp, kMap, kAp, kLac, kUrine, kTemp, kSpo2, kResp, kCreat,
  kWeight, kHgb, kLowMap, kTachy,
  kPolFluidU, kPolFluidD, kPolVasoU, kPolVasoD,
  kUnitTbvFloor = 40, kUnitTprFloor, kUnitHrBase, kUnitSev, kUnitW0, kUnitH0,
  kUnitTbv0, kUnitTpr0, kUnitLac0, kUnitCreat0, kUnitTemp0,
};

struct Hidden {
  double tbv_floor, tpr_floor, hr_base, sev, w0, h0;
};

struct Cols {
  // schema order: categoricals first
  static constexpr std::size_t low_map = 0, tachy = 1, tbv = 2, tpr = 3, map = 4, ap = 5,
                               cvp = 6, hr = 7, aq = 8, sv = 9, lac = 10, urine = 11, temp = 12,
                               spo2 = 13, resp = 14, creat = 15, weight = 16, hgb = 17;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RuleSpec c1_rule_spec(const HemoSimConfig&) {
  RuleSpec spec;
  RuleSpec::PerTreatment vaso;
  vaso.conditions = {{Cols::map, true, 69.0}};
  vaso.dose_intercept = 1.8 + 0.5 * 69.0;
  vaso.dose_terms = {{Cols::map, -0.5}};
  vaso.dose_min = 0.5;
  vaso.dose_max = 8.0;
  RuleSpec::PerTreatment fluid;
  fluid.conditions = {{Cols::map, true, 73.0}, {Cols::cvp, true, 6.5}};
  fluid.dose_intercept = 300.0 + 25.0 * 73.0 + 30.0 * 6.5;
  fluid.dose_terms = {{Cols::map, -25.0}, {Cols::cvp, -30.0}};
  fluid.dose_min = 100.0;
  fluid.dose_max = 1200.0;
  spec.treatments = {vaso, fluid};
  return spec;
}

enum class Mode { Obs, C1, C2 };

Trajectory simulate_unit(const HemoSimConfig& cfg, std::size_t unit, Mode mode) {
  const std::size_t K = cfg.horizon;
  const double ns = cfg.noise_scale;
  auto gauss = [&](std::size_t t, std::uint64_t ch) {
    return ns * keyed_normal(cfg.seed, unit, t, ch);
  };
  Hidden hd;
  hd.tbv_floor = 3700.0 + 250.0 * keyed_normal(cfg.seed, unit, 0, kUnitTbvFloor);
  hd.tpr_floor = std::max(0.30, 0.55 + 0.08 * keyed_normal(cfg.seed, unit, 0, kUnitTprFloor));
  hd.hr_base = 78.0 + 6.0 * keyed_normal(cfg.seed, unit, 0, kUnitHrBase);
  hd.sev = std::clamp(1.0 + 0.3 * keyed_normal(cfg.seed, unit, 0, kUnitSev), 0.45, 1.8);
  hd.w0 = 75.0 + 10.0 * keyed_normal(cfg.seed, unit, 0, kUnitW0);
  hd.h0 = 12.0 + 1.0 * keyed_normal(cfg.seed, unit, 0, kUnitH0);

  Trajectory traj;
  traj.cov = Tensor({K, 18});
  traj.treat = Tensor({K, 2});

  double tbv = 5100.0 + 150.0 * keyed_normal(cfg.seed, unit, 0, kUnitTbv0);
  double tpr = 1.05 + 0.10 * keyed_normal(cfg.seed, unit, 0, kUnitTpr0);
  double lac = std::max(0.4, 1.2 + 0.2 * keyed_normal(cfg.seed, unit, 0, kUnitLac0));
  double creat = std::max(0.4, 0.9 + 0.15 * keyed_normal(cfg.seed, unit, 0, kUnitCreat0));
  double temp = 37.0 + 0.3 * keyed_normal(cfg.seed, unit, 0, kUnitTemp0);
  double cum_fluid = 0.0;
  double prev_map = 85.0;
  RuleSpec c1 = c1_rule_spec(cfg);
  std::size_t switch_action = cfg.switch_time - 1;

  for (std::size_t t = 0; t < K; ++t) {
    double* row = traj.cov.data() + t * 18;
    // Derived covariates at time t.
    double sv = std::clamp(70.0 + 0.022 * (tbv - 5000.0), 35.0, 110.0);
    double hr = std::clamp(hd.hr_base + 0.55 * (88.0 - prev_map) + 2.0 * (lac - 1.0) +
                               2.0 * gauss(t, kHr),
                           55.0, 150.0);
    double aq = std::clamp(hr * sv / 1000.0 + 0.15 * gauss(t, kAq), 2.0, 12.0);
    double cvp = std::clamp(7.5 + 0.0045 * (tbv - 5000.0) + 0.4 * gauss(t, kCvp), 1.0, 20.0);
    double map = std::clamp(cvp + aq * 16.67 * tpr + 1.5 * gauss(t, kMap), 35.0, 140.0);
    double ap = map + 4.0 * gauss(t, kAp);
    double urine = std::clamp(0.9 * std::max(0.0, map - 62.0) + 2.0 * gauss(t, kUrine), 0.0, 60.0);
    double spo2 = std::clamp(98.5 - 0.10 * std::max(0.0, 72.0 - map) - 0.3 * (lac - 1.0) +
                                 0.3 * gauss(t, kSpo2),
                             82.0, 100.0);
    double resp = std::clamp(14.0 + 1.1 * lac + 0.06 * std::max(0.0, 70.0 - map) +
                                 0.8 * gauss(t, kResp),
                             8.0, 40.0);
    double weight = hd.w0 + 0.0009 * cum_fluid + 0.05 * gauss(t, kWeight);
    double hgb = std::clamp(hd.h0 - 0.0018 * (tbv - 5000.0) + 0.08 * gauss(t, kHgb), 6.0, 18.0);
    double low_map = (map + 2.0 * gauss(t, kLowMap) < 70.0) ? 1.0 : 0.0;
    double tachy = (hr + 2.0 * gauss(t, kTachy) > 105.0) ? 1.0 : 0.0;

    row[Cols::low_map] = low_map;
    row[Cols::tachy] = tachy;
    row[Cols::tbv] = tbv;
    row[Cols::tpr] = tpr;
    row[Cols::map] = map;
    row[Cols::ap] = ap;
    row[Cols::cvp] = cvp;
    row[Cols::hr] = hr;
    row[Cols::aq] = aq;
    row[Cols::sv] = sv;
    row[Cols::lac] = lac;
    row[Cols::urine] = urine;
    row[Cols::temp] = temp;
    row[Cols::spo2] = spo2;
    row[Cols::resp] = resp;
    row[Cols::creat] = creat;
    row[Cols::weight] = weight;
    row[Cols::hgb] = hgb;

    // Treatment after observing L_t.
    double vaso = 0.0, fluid = 0.0;
    bool counterfactual = mode != Mode::Obs && t >= switch_action;
    if (!counterfactual) {
      double pf = sigmoid(cfg.fluid_p0 + cfg.fluid_p_map * (75.0 - map) +
                          cfg.fluid_p_cvp * (8.0 - cvp));
      if (keyed_uniform(cfg.seed, unit, t, kPolFluidU) < pf)
        fluid = std::clamp(cfg.fluid_d0 + cfg.fluid_d_map * (75.0 - map) +
                               cfg.fluid_d_cvp * (8.0 - cvp) +
                               cfg.fluid_d_sd * keyed_normal(cfg.seed, unit, t, kPolFluidD),
                           cfg.fluid_min, cfg.fluid_max);
      double pv = sigmoid(cfg.vaso_p0 + cfg.vaso_p_map * (70.0 - map));
      if (keyed_uniform(cfg.seed, unit, t, kPolVasoU) < pv)
        vaso = std::clamp(cfg.vaso_d0 + cfg.vaso_d_map * (70.0 - map) +
                              cfg.vaso_d_sd * keyed_normal(cfg.seed, unit, t, kPolVasoD),
                          cfg.vaso_min, cfg.vaso_max);
    } else if (mode == Mode::C1) {
      double out[2];
      rule_actions_row(c1, row, out, 2);
      vaso = out[0];
      fluid = out[1];
    } // C2 withholds: zero doses
    traj.treat.at(t, 0) = vaso;
    traj.treat.at(t, 1) = fluid;
    cum_fluid += fluid;

    // State advance to t+1.
    tbv = std::clamp(tbv - cfg.tbv_leak * hd.sev * (tbv - hd.tbv_floor) + cfg.fluid_gain * fluid +
                         40.0 * gauss(t, kTbv),
                     2500.0, 7000.0);
    tpr = std::clamp(tpr - cfg.tpr_leak * hd.sev * (tpr - hd.tpr_floor) + cfg.vaso_gain * vaso +
                         0.03 * gauss(t, kTpr),
                     0.30, 2.0);
    lac = std::clamp(lac + 0.09 * std::max(0.0, 68.0 - map) - 0.12 * (lac - 0.8) +
                         0.05 * gauss(t, kLac),
                     0.4, 14.0);
    creat = std::clamp(creat + 0.012 * std::max(0.0, 62.0 - map) - 0.02 * (creat - 0.8) +
                           0.01 * gauss(t, kCreat),
                       0.4, 6.0);
    temp = std::clamp(temp + 0.25 * (37.3 + 0.1 * lac - temp) + 0.08 * gauss(t, kTemp), 35.5, 40.5);
    prev_map = map;
  }
  return traj;
}

} // namespace

Schema hemo_schema() {
  Schema sc;
  sc.covariates = {
      {"low_map", VarKind::Categorical, 2}, {"tachy", VarKind::Categorical, 2},
      {"tbv", VarKind::Continuous, 0},      {"tpr", VarKind::Continuous, 0},
      {"map", VarKind::Continuous, 0},      {"ap", VarKind::Continuous, 0},
      {"cvp", VarKind::Continuous, 0},      {"hr", VarKind::Continuous, 0},
      {"aq", VarKind::Continuous, 0},       {"sv", VarKind::Continuous, 0},
      {"lactate", VarKind::Continuous, 0},  {"urine", VarKind::Continuous, 0},
      {"temp", VarKind::Continuous, 0},     {"spo2", VarKind::Continuous, 0},
      {"resp", VarKind::Continuous, 0},     {"creatinine", VarKind::Continuous, 0},
      {"weight", VarKind::Continuous, 0},   {"hgb", VarKind::Continuous, 0},
  };
  sc.treatments = {{"vaso", VarKind::Continuous}, {"fluid", VarKind::Continuous}};
  sc.outcome_index = static_cast<int>(Cols::map);
  sc.validate();
  return sc;
}

std::size_t hemo_cov_index(const std::string& name) {
  Schema sc = hemo_schema();
  for (std::size_t i = 0; i < sc.n_cov(); ++i)
    if (sc.covariates[i].name == name) return i;
  throw DataError("hemo_cov_index: unknown covariate '" + name + "'");
}

namespace {
Dataset gen_hemo(const HemoSimConfig& cfg, std::size_t unit_begin, std::size_t n_units,
                 Mode mode, const std::string& regime_id) {
  if (cfg.switch_time < 1 || cfg.switch_time >= cfg.horizon)
    throw DataError("hemo: switch time must be inside the horizon");
  Dataset ds;
  ds.schema = hemo_schema();
  ds.meta.generator = "hemo";
  ds.meta.seed = cfg.seed;
  ds.meta.regime_id = regime_id;
  ds.meta.switch_time = static_cast<int>(cfg.switch_time);
  for (std::size_t u = 0; u < n_units; ++u)
    ds.units.push_back(simulate_unit(cfg, unit_begin + u, mode));
  ds.stats = compute_norm_stats(ds.schema, ds.units);
  return ds;
}
} // namespace

Dataset gen_hemo_observational(const HemoSimConfig& cfg, std::size_t unit_begin,
                               std::size_t n_units) {
  return gen_hemo(cfg, unit_begin, n_units, Mode::Obs, "observational");
}

Dataset gen_hemo_counterfactual(const HemoSimConfig& cfg, std::size_t unit_begin,
                                std::size_t n_units, const std::string& which) {
  if (which == "c1") return gen_hemo(cfg, unit_begin, n_units, Mode::C1, "c1");
  if (which == "c2") return gen_hemo(cfg, unit_begin, n_units, Mode::C2, "c2");
  throw DataError("gen_hemo_counterfactual: which must be c1 or c2");
}

std::unique_ptr<TreatmentRegime> hemo_regime(const HemoSimConfig& cfg, const std::string& which) {
  if (which == "c1") return std::make_unique<RuleBasedRegime>("c1", c1_rule_spec(cfg));
  if (which == "c2") return std::make_unique<WithholdRegime>("c2");
  throw DataError("hemo_regime: which must be c1 or c2");
}

} // namespace gcsim
