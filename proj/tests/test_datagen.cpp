#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gcsim/datagen_hemo.hpp"
#include "gcsim/datagen_mdp.hpp"
#include "gcsim/datagen_tumor.hpp"
#include "gcsim/errors.hpp"

#include <cmath>

using namespace gcsim;

TEST_CASE("tumor: dynamics off plus no treatment gives constant volume") {
  TumorSimConfig cfg;
  cfg.n_units = 5;
  cfg.growth_mean = 0.0;
  cfg.growth_sd = 0.0;
  cfg.noise_sd = 0.0;
  Dataset cf = gen_tumor_counterfactual(cfg, 0, 5, "no_treat");
  // Policy still treats before the switch; isolate the final window where
  // treatment is withheld and dynamics are off. Chemo concentration from
  // earlier treatments decays, so compare only once the window is clean.
  TumorSimConfig quiet = cfg;
  quiet.policy_center_frac = 1e9; // treat-probability ~ 0 everywhere
  Dataset obs = gen_tumor_observational(quiet, 0, 5);
  for (const auto& u : obs.units)
    for (std::size_t t = 1; t < u.length(); ++t)
      CHECK(u.cov.at(t, 0) == doctest::Approx(u.cov.at(0, 0)).epsilon(1e-12));
}

TEST_CASE("tumor: volumes stay inside [0, 1150] over 10^4 trajectories") {
  TumorSimConfig cfg;
  Dataset ds = gen_tumor_observational(cfg, 0, 10000);
  double mx = 0.0;
  for (const auto& u : ds.units)
    for (std::size_t t = 0; t < u.length(); ++t) {
      double v = u.cov.at(t, 0);
      CHECK(v >= 0.0);
      CHECK(v <= 1150.0);
      mx = std::max(mx, v);
    }
  CHECK(mx > 100.0); // the bound is active, not vacuous
}

TEST_CASE("tumor: treatment correlates positively with recent volume (confounding)") {
  TumorSimConfig cfg;
  Dataset ds = gen_tumor_observational(cfg, 0, 500);
  double sum_v = 0, sum_a = 0, sum_va = 0, sum_vv = 0, sum_aa = 0;
  std::size_t n = 0;
  for (const auto& u : ds.units)
    for (std::size_t t = 0; t < u.length(); ++t) {
      double v = u.cov.at(t, 0);
      double a = u.treat.at(t, 0);
      sum_v += v;
      sum_a += a;
      sum_va += v * a;
      sum_vv += v * v;
      sum_aa += a * a;
      ++n;
    }
  double cov = sum_va / n - (sum_v / n) * (sum_a / n);
  double corr = cov / std::sqrt((sum_vv / n - sum_v / n * sum_v / n) *
                                (sum_aa / n - sum_a / n * sum_a / n));
  CHECK(corr > 0.2);
}

TEST_CASE("tumor counterfactuals: window overrides, twinning, regime monotonicity") {
  TumorSimConfig cfg;
  cfg.n_units = 200;
  Dataset obs = gen_tumor_observational(cfg, 0, 200);
  Dataset none = gen_tumor_counterfactual(cfg, 0, 200, "no_treat");
  Dataset both = gen_tumor_counterfactual(cfg, 0, 200, "chemo_radio");
  std::size_t switch_action = cfg.switch_time() - 1;

  for (std::size_t u = 0; u < 200; ++u) {
    // no-treatment regime zeroes the window's actions
    for (std::size_t t = switch_action; t < cfg.horizon; ++t) {
      CHECK(none.units[u].treat.at(t, 0) == 0.0);
      CHECK(none.units[u].treat.at(t, 1) == 0.0);
      CHECK(both.units[u].treat.at(t, 0) == 1.0);
      CHECK(both.units[u].treat.at(t, 1) == 1.0);
    }
    // pre-switch prefixes identical to the observational twin, bitwise
    for (std::size_t t = 0; t < cfg.switch_time(); ++t) {
      CHECK(none.units[u].cov.at(t, 0) == obs.units[u].cov.at(t, 0));
      CHECK(both.units[u].cov.at(t, 0) == obs.units[u].cov.at(t, 0));
    }
    for (std::size_t t = 0; t < switch_action; ++t) {
      CHECK(none.units[u].treat.at(t, 0) == obs.units[u].treat.at(t, 0));
      CHECK(none.units[u].treat.at(t, 1) == obs.units[u].treat.at(t, 1));
    }
    // shared noise makes treatment monotone per unit
    for (std::size_t t = cfg.switch_time(); t < cfg.horizon; ++t)
      CHECK(both.units[u].cov.at(t, 0) <= none.units[u].cov.at(t, 0) + 1e-12);
  }
  CHECK_THROWS_AS(gen_tumor_counterfactual(cfg, 0, 3, "bogus"), DataError);
}

TEST_CASE("hemo: withholding with noise off makes TBV monotone nonincreasing") {
  HemoSimConfig cfg;
  cfg.noise_scale = 0.0;
  cfg.switch_time = 1; // withhold from the first action
  Dataset ds = gen_hemo_counterfactual(cfg, 0, 5, "c2");
  std::size_t tbv = hemo_cov_index("tbv");
  for (const auto& u : ds.units)
    for (std::size_t t = 1; t < u.length(); ++t)
      CHECK(u.cov.at(t, tbv) <= u.cov.at(t - 1, tbv) + 1e-9);
}

TEST_CASE("hemo: treat probability decreases in MAP on generated data") {
  HemoSimConfig cfg;
  Dataset ds = gen_hemo_observational(cfg, 0, 300);
  std::size_t map_idx = hemo_cov_index("map");
  // Compare treated fraction between low-MAP and high-MAP halves.
  std::vector<std::pair<double, double>> rows;
  for (const auto& u : ds.units)
    for (std::size_t t = 0; t < u.length(); ++t)
      rows.emplace_back(u.cov.at(t, map_idx), u.treat.at(t, 1) != 0.0 ? 1.0 : 0.0);
  std::sort(rows.begin(), rows.end());
  std::size_t half = rows.size() / 2;
  double low = 0, high = 0;
  for (std::size_t i = 0; i < half; ++i) low += rows[i].second;
  for (std::size_t i = half; i < rows.size(); ++i) high += rows[i].second;
  CHECK(low / half > high / (rows.size() - half) + 0.1);
}

TEST_CASE("hemo: every policy driver is an emitted covariate") {
  Schema sc = hemo_schema();
  CHECK_NOTHROW(hemo_cov_index("map"));
  CHECK_NOTHROW(hemo_cov_index("cvp"));
  CHECK(sc.covariates[sc.outcome_index].name == "map");
  CHECK(sc.n_cov() == 18);
  CHECK(sc.n_treat() == 2);
  CHECK(sc.n_cat() == 2);
}

TEST_CASE("hemo counterfactuals: withheld doses, prefix twinning, c1 determinism") {
  HemoSimConfig cfg;
  Dataset obs = gen_hemo_observational(cfg, 0, 40);
  Dataset c1 = gen_hemo_counterfactual(cfg, 0, 40, "c1");
  Dataset c2 = gen_hemo_counterfactual(cfg, 0, 40, "c2");
  std::size_t m = cfg.switch_time;
  for (std::size_t u = 0; u < 40; ++u) {
    for (std::size_t t = m - 1; t < cfg.horizon; ++t) {
      CHECK(c2.units[u].treat.at(t, 0) == 0.0);
      CHECK(c2.units[u].treat.at(t, 1) == 0.0);
    }
    for (std::size_t t = 0; t < m; ++t)
      for (std::size_t j = 0; j < 18; ++j) {
        CHECK(c1.units[u].cov.at(t, j) == obs.units[u].cov.at(t, j));
        CHECK(c2.units[u].cov.at(t, j) == obs.units[u].cov.at(t, j));
      }
    for (std::size_t t = 0; t + 1 < m; ++t)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(c1.units[u].treat.at(t, j) == obs.units[u].treat.at(t, j));
  }
  // Deterministic post-switch rule: a second generation is bitwise identical.
  Dataset c1b = gen_hemo_counterfactual(cfg, 0, 40, "c1");
  for (std::size_t u = 0; u < 40; ++u)
    for (std::size_t i = 0; i < c1.units[u].cov.size(); ++i)
      CHECK(c1.units[u].cov[i] == c1b.units[u].cov[i]);
  CHECK_THROWS_AS(gen_hemo_counterfactual(cfg, 0, 2, "c9"), DataError);
}

TEST_CASE("hemo: the simulator regimes match the generator's post-switch rules") {
  HemoSimConfig cfg;
  Dataset c1 = gen_hemo_counterfactual(cfg, 0, 10, "c1");
  auto regime = hemo_regime(cfg, "c1");
  std::size_t m = cfg.switch_time;
  RolloutHistory hist(1, cfg.horizon, 18, 2);
  for (std::size_t u = 0; u < 10; ++u) {
    hist.init_from_prefix(c1.units[u], cfg.horizon);
    for (std::size_t t = m - 1; t < cfg.horizon; ++t) {
      Tensor a = regime->actions(hist, t);
      CHECK(a.at(0, 0) == doctest::Approx(c1.units[u].treat.at(t, 0)).epsilon(1e-12));
      CHECK(a.at(0, 1) == doctest::Approx(c1.units[u].treat.at(t, 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mdp: deterministic transitions collapse every trajectory after the first step") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  cfg.n_units = 50;
  std::size_t S = 6;
  Tensor trans({2 * S, S});
  for (std::size_t r = 0; r < 2 * S; ++r) trans.at(r, 0) = 1.0; // always jump to state 0
  cfg.transition = trans;
  Dataset ds = gen_oracle_mdp(cfg);
  for (const auto& u : ds.units)
    for (std::size_t t = 1; t < u.length(); ++t) {
      CHECK(u.cov.at(t, 0) == 0.0);
      CHECK(u.cov.at(t, 1) == 0.0);
    }
}

TEST_CASE("mdp: empirical transition frequencies match the tensor within 3 sigma") {
  OracleMdpConfig cfg;
  cfg.classes = {3};
  cfg.horizon = 6;
  cfg.n_units = 20000;
  cfg.seed = 9;
  MdpSystem sys = make_mdp_system(cfg);
  Dataset ds = gen_oracle_mdp(cfg);
  std::size_t S = 3;
  std::vector<double> counts(S * 2 * S, 0.0), totals(S * 2, 0.0);
  for (const auto& u : ds.units)
    for (std::size_t t = 0; t + 1 < u.length(); ++t) {
      std::size_t s = sys.state_index(u.cov.data() + t);
      std::size_t a = u.treat.at(t, 0) != 0.0 ? 1 : 0;
      std::size_t ns = sys.state_index(u.cov.data() + t + 1);
      counts[(a * S + s) * S + ns] += 1.0;
      totals[a * S + s] += 1.0;
    }
  for (std::size_t row = 0; row < 2 * S; ++row) {
    REQUIRE(totals[row] > 500);
    for (std::size_t ns = 0; ns < S; ++ns) {
      double p = sys.transition.at(row, ns);
      double freq = counts[row * S + ns] / totals[row];
      double sd = std::sqrt(p * (1 - p) / totals[row]);
      CHECK(std::abs(freq - p) <= 3.5 * sd + 1e-9);
    }
  }
}

TEST_CASE("mdp: an all-zero policy table never treats") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  cfg.n_units = 30;
  cfg.treat_prob = std::vector<double>(6, 0.0);
  Dataset ds = gen_oracle_mdp(cfg);
  for (const auto& u : ds.units)
    for (std::size_t t = 0; t < u.length(); ++t) CHECK(u.treat.at(t, 0) == 0.0);
}

TEST_CASE("exact_gformula: one-step reads the tensor row; distributions sum to one") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  cfg.horizon = 6;
  cfg.seed = 17;
  MdpSystem sys = make_mdp_system(cfg);
  Dataset ds = gen_oracle_mdp(cfg);
  const Trajectory& unit = ds.units[0];
  std::size_t m = 4;
  WithholdRegime withhold;
  std::vector<double> one = exact_gformula(sys, unit, m, withhold, m);
  std::size_t s = sys.state_index(unit.cov.data() + (m - 1) * 2);
  for (std::size_t ns = 0; ns < 6; ++ns)
    CHECK(one[ns] == doctest::Approx(sys.transition.at(s, ns)).epsilon(1e-15));

  std::vector<double> two = exact_gformula(sys, unit, m, withhold, m + 1);
  double sum = 0.0;
  for (double p : two) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("exact_gformula: regimes are irrelevant on a treatment-insensitive system") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  cfg.horizon = 6;
  cfg.seed = 19;
  cfg.action_insensitive = true;
  MdpSystem sys = make_mdp_system(cfg);
  Dataset ds = gen_oracle_mdp(cfg);
  const Trajectory& unit = ds.units[0];
  WithholdRegime withhold;
  RuleSpec spec;
  RuleSpec::PerTreatment pt;
  pt.conditions = {{0, false, 0.5}};
  pt.dose_intercept = 1.0;
  pt.dose_max = 1.0;
  spec.treatments = {pt};
  RuleBasedRegime rule("rule", spec);
  for (std::size_t target = 4; target < 6; ++target) {
    auto a = exact_gformula(sys, unit, 4, withhold, target);
    auto b = exact_gformula(sys, unit, 4, rule, target);
    for (std::size_t s = 0; s < a.size(); ++s) CHECK(a[s] == doctest::Approx(b[s]).epsilon(1e-12));
  }
}

TEST_CASE("exact_gformula guards: stochastic regimes and path explosions are rejected") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  cfg.horizon = 6;
  MdpSystem sys = make_mdp_system(cfg);
  Dataset ds = gen_oracle_mdp(cfg);
  WithholdRegime withhold;
  CHECK_THROWS_AS(exact_gformula(sys, ds.units[0], 2, withhold, 5, 10), DataError);
}

TEST_CASE("mdp serialization round-trips through the metadata block") {
  OracleMdpConfig cfg;
  cfg.classes = {3, 2};
  MdpSystem sys = make_mdp_system(cfg);
  MdpSystem back = parse_mdp_system(serialize_mdp_system(sys));
  CHECK(back.classes == sys.classes);
  for (std::size_t i = 0; i < sys.transition.size(); ++i)
    CHECK(back.transition[i] == sys.transition[i]);
  CHECK(back.treat_prob == sys.treat_prob);
}

TEST_CASE("generators are deterministic given the seed") {
  TumorSimConfig tc;
  Dataset a = gen_tumor_observational(tc, 0, 5);
  Dataset b = gen_tumor_observational(tc, 0, 5);
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t i = 0; i < a.units[u].cov.size(); ++i)
      CHECK(a.units[u].cov[i] == b.units[u].cov[i]);
  HemoSimConfig hc;
  hc.n_units = 3;
  Dataset ha = gen_hemo_observational(hc, 0, 3);
  Dataset hb = gen_hemo_observational(hc, 0, 3);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t i = 0; i < ha.units[u].cov.size(); ++i)
      CHECK(ha.units[u].cov[i] == hb.units[u].cov[i]);
  // all generated values finite
  for (const auto& u : ha.units) {
    CHECK(u.cov.all_finite());
    CHECK(u.treat.all_finite());
  }
}
