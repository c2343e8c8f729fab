#include "gcsim/datagen_mdp.hpp"

#include "gcsim/errors.hpp"
#include "gcsim/rng.hpp"

#include <cmath>
#include <sstream>

namespace gcsim {

std::size_t MdpSystem::n_states() const {
  std::size_t n = 1;
  for (int c : classes) n *= static_cast<std::size_t>(c);
  return n;
}

std::size_t MdpSystem::state_index(const double* cov_row) const {
  std::size_t s = 0;
  for (std::size_t d = 0; d < classes.size(); ++d)
    s = s * static_cast<std::size_t>(classes[d]) + static_cast<std::size_t>(std::lround(cov_row[d]));
  return s;
}

void MdpSystem::state_classes(std::size_t s, double* cov_row) const {
  for (std::size_t d = classes.size(); d-- > 0;) {
    cov_row[d] = static_cast<double>(s % static_cast<std::size_t>(classes[d]));
    s /= static_cast<std::size_t>(classes[d]);
  }
}

Schema MdpSystem::make_schema() const {
  Schema sc;
  for (std::size_t d = 0; d < classes.size(); ++d)
    sc.covariates.push_back({"s" + std::to_string(d), VarKind::Categorical, classes[d]});
  sc.treatments.push_back({"treat", VarKind::Categorical});
  sc.outcome_index = 0;
  sc.validate();
  return sc;
}

void MdpSystem::validate() const {
  if (classes.empty() || classes.size() > 2)
    throw DataError("mdp: between 1 and 2 covariates supported");
  for (int c : classes)
    if (c < 2 || c > 3) throw DataError("mdp: classes per covariate must be 2 or 3");
  std::size_t S = n_states();
  if (transition.rows() != 2 * S || transition.cols() != S)
    throw DataError("mdp: transition tensor must be (2*n_states, n_states)");
  for (std::size_t r = 0; r < transition.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < S; ++c) {
      double p = transition.at(r, c);
      if (p < 0.0 || !std::isfinite(p)) throw DataError("mdp: invalid transition row");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("mdp: transition row does not sum to 1");
  }
  if (treat_prob.size() != S) throw DataError("mdp: policy table size mismatch");
  for (double p : treat_prob)
    if (p < 0.0 || p > 1.0) throw DataError("mdp: policy probability out of [0,1]");
}

MdpSystem make_mdp_system(const OracleMdpConfig& cfg) {
  MdpSystem sys;
  sys.classes = cfg.classes;
  std::size_t S = sys.n_states();
  if (S == 0) throw DataError("mdp: empty state space");
  if (!cfg.transition.empty()) {
    sys.transition = cfg.transition;
  } else {
    Rng rng(derive_seed(cfg.seed, "mdp.system"));
    sys.transition = Tensor({2 * S, S});
    for (std::size_t r = 0; r < 2 * S; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < S; ++c) {
        // Sticky diagonal plus treatment-dependent drift keeps rows distinct
        // and every entry positive.
        double base = rng.uniform(0.05, 1.0);
        if (c == r % S) base += 1.5;
        if (r >= S && c == (r + 1) % S) base += 1.0;
        sys.transition.at(r, c) = base;
        sum += base;
      }
      for (std::size_t c = 0; c < S; ++c) sys.transition.at(r, c) /= sum;
    }
  }
  if (cfg.action_insensitive)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t c = 0; c < S; ++c) sys.transition.at(S + s, c) = sys.transition.at(s, c);
  if (!cfg.treat_prob.empty()) {
    sys.treat_prob = cfg.treat_prob;
  } else {
    Rng rng(derive_seed(cfg.seed, "mdp.policy"));
    sys.treat_prob.resize(S);
    for (std::size_t s = 0; s < S; ++s) sys.treat_prob[s] = rng.uniform(0.2, 0.8);
  }
  sys.validate();
  return sys;
}

Dataset gen_oracle_mdp(const OracleMdpConfig& cfg) {
  MdpSystem sys = make_mdp_system(cfg);
  std::size_t S = sys.n_states();
  Dataset ds;
  ds.schema = sys.make_schema();
  ds.meta.generator = "oracle_mdp";
  ds.meta.seed = cfg.seed;
  ds.meta.regime_id = "observational";
  ds.meta.extra["mdp_system"] = serialize_mdp_system(sys);
  std::size_t d_cov = ds.schema.n_cov();
  for (std::size_t u = 0; u < cfg.n_units; ++u) {
    Rng rng(derive_seed(cfg.seed, "mdp.unit", u));
    Trajectory traj;
    traj.cov = Tensor({cfg.horizon, d_cov});
    traj.treat = Tensor({cfg.horizon, 1});
    std::size_t s = rng.index(S);
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      sys.state_classes(s, traj.cov.data() + t * d_cov);
      int a = rng.bernoulli(sys.treat_prob[s]) ? 1 : 0;
      traj.treat.at(t, 0) = static_cast<double>(a);
      const double* row = sys.transition.data() + (static_cast<std::size_t>(a) * S + s) * S;
      s = rng.categorical(std::span<const double>(row, S));
    }
    ds.units.push_back(std::move(traj));
  }
  ds.stats = compute_norm_stats(ds.schema, ds.units);
  return ds;
}

std::string serialize_mdp_system(const MdpSystem& sys) {
  std::ostringstream os;
  os.precision(17);
  os << sys.classes.size();
  for (int c : sys.classes) os << ' ' << c;
  os << ' ' << sys.transition.rows() << ' ' << sys.transition.cols();
  for (std::size_t i = 0; i < sys.transition.size(); ++i) os << ' ' << sys.transition[i];
  os << ' ' << sys.treat_prob.size();
  for (double p : sys.treat_prob) os << ' ' << p;
  return os.str();
}

MdpSystem parse_mdp_system(const std::string& text) {
  std::istringstream is(text);
  MdpSystem sys;
  std::size_t nc = 0;
  is >> nc;
  sys.classes.resize(nc);
  for (auto& c : sys.classes) is >> c;
  std::size_t rows = 0, cols = 0;
  is >> rows >> cols;
  sys.transition = Tensor({rows, cols});
  for (std::size_t i = 0; i < sys.transition.size(); ++i) is >> sys.transition[i];
  std::size_t np = 0;
  is >> np;
  sys.treat_prob.resize(np);
  for (auto& p : sys.treat_prob) is >> p;
  if (!is) throw DataError("mdp: malformed embedded system description");
  sys.validate();
  return sys;
}

std::vector<double> exact_gformula(const MdpSystem& sys, const Trajectory& prefix, std::size_t m,
                                   TreatmentRegime& regime, std::size_t target,
                                   std::size_t max_paths) {
  if (!regime.deterministic())
    throw DataError("exact_gformula: regime must be deterministic for enumeration");
  if (target < m) throw DataError("exact_gformula: target precedes first simulated time");
  std::size_t S = sys.n_states();
  std::size_t depth = target - m + 1; // transitions from row m-1 through row target-1
  double paths = std::pow(static_cast<double>(S), static_cast<double>(depth - 1));
  if (paths > static_cast<double>(max_paths))
    throw DataError("exact_gformula: path count exceeds enumeration guard");

  Schema sc = sys.make_schema();
  std::vector<double> dist(S, 0.0);
  // Depth-first walk over covariate paths l_{m..target-1}; the regime reads
  // the partially built history exactly as the simulator would.
  RolloutHistory hist(1, target + 1, sc.n_cov(), 1);
  hist.init_from_prefix(prefix, m);

  struct Frame {
    std::size_t state;
    double prob;
  };
  std::vector<double> row_buf(sc.n_cov());
  auto recurse = [&](auto&& self, std::size_t t, double prob) -> void {
    // t is the time of the action being decided (covariate rows <= t exist).
    Tensor a = regime.actions(hist, t);
    std::size_t ai = a[0] != 0.0 ? 1 : 0;
    std::size_t s = sys.state_index(hist.cov_row(0, t));
    const double* trans = sys.transition.data() + (ai * S + s) * S;
    if (t + 1 == target) {
      for (std::size_t ns = 0; ns < S; ++ns) dist[ns] += prob * trans[ns];
      return;
    }
    for (std::size_t ns = 0; ns < S; ++ns) {
      if (trans[ns] == 0.0) continue;
      sys.state_classes(ns, row_buf.data());
      Tensor cov_row({1, sc.n_cov()});
      std::copy_n(row_buf.data(), sc.n_cov(), cov_row.data());
      Tensor treat_row({1, 1});
      treat_row[0] = static_cast<double>(ai);
      hist.push_treat(treat_row);
      hist.push_cov(cov_row);
      self(self, t + 1, prob * trans[ns]);
      hist.pop_cov();
      hist.pop_treat();
    }
  };
  recurse(recurse, m - 1, 1.0);
  return dist;
}

} // namespace gcsim
