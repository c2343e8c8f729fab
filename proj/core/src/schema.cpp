#include "gcsim/schema.hpp"

#include "gcsim/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gcsim {

std::size_t Schema::n_cat() const {
  std::size_t n = 0;
  for (const auto& c : covariates)
    if (c.kind == VarKind::Categorical) ++n;
  return n;
}

std::size_t Schema::onehot_width() const {
  std::size_t w = 0;
  for (const auto& c : covariates)
    if (c.kind == VarKind::Categorical) w += static_cast<std::size_t>(c.classes);
  return w;
}

void Schema::validate() const {
  if (covariates.empty()) throw DataError("schema: no covariates");
  if (outcome_index < 0 || outcome_index >= static_cast<int>(covariates.size()))
    throw DataError("schema: outcome column missing or out of range");
  bool seen_cont = false;
  for (const auto& c : covariates) {
    if (c.kind == VarKind::Categorical) {
      if (seen_cont)
        throw DataError("schema: categorical covariate '" + c.name +
                        "' appears after the continuous block");
      if (c.classes < 2) throw DataError("schema: categorical '" + c.name + "' needs >= 2 classes");
    } else {
      seen_cont = true;
      if (c.classes != 0) throw DataError("schema: continuous '" + c.name + "' has classes set");
    }
  }
}

bool Schema::operator==(const Schema& other) const {
  auto cov_eq = [](const CovariateSpec& a, const CovariateSpec& b) {
    return a.name == b.name && a.kind == b.kind && a.classes == b.classes;
  };
  auto treat_eq = [](const TreatmentSpec& a, const TreatmentSpec& b) {
    return a.name == b.name && a.kind == b.kind;
  };
  return covariates.size() == other.covariates.size() &&
         treatments.size() == other.treatments.size() &&
         static_names == other.static_names && outcome_index == other.outcome_index &&
         std::equal(covariates.begin(), covariates.end(), other.covariates.begin(), cov_eq) &&
         std::equal(treatments.begin(), treatments.end(), other.treatments.begin(), treat_eq);
}

namespace {
struct Moments {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  void finish(double& mean, double& sd) const {
    if (n == 0) return;
    mean = sum / static_cast<double>(n);
    double var = sum2 / static_cast<double>(n) - mean * mean;
    sd = std::sqrt(std::max(var, 0.0));
    if (sd < 1e-8) sd = 1.0; // constant column: identity scale
  }
};
} // namespace

NormStats compute_norm_stats(const Schema& schema, const std::vector<Trajectory>& units) {
  NormStats s;
  s.cov_mean.assign(schema.n_cov(), 0.0);
  s.cov_std.assign(schema.n_cov(), 1.0);
  s.treat_mean.assign(schema.n_treat(), 0.0);
  s.treat_std.assign(schema.n_treat(), 1.0);
  s.static_mean.assign(schema.n_static(), 0.0);
  s.static_std.assign(schema.n_static(), 1.0);

  for (std::size_t j = 0; j < schema.n_cov(); ++j) {
    if (schema.covariates[j].kind == VarKind::Categorical) continue;
    Moments m;
    for (const auto& u : units)
      for (std::size_t t = 0; t < u.length(); ++t) m.add(u.cov.at(t, j));
    m.finish(s.cov_mean[j], s.cov_std[j]);
  }
  for (std::size_t j = 0; j < schema.n_treat(); ++j) {
    if (schema.treatments[j].kind == VarKind::Categorical) continue;
    Moments m;
    for (const auto& u : units)
      for (std::size_t t = 0; t < u.length(); ++t) m.add(u.treat.at(t, j));
    m.finish(s.treat_mean[j], s.treat_std[j]);
  }
  for (std::size_t j = 0; j < schema.n_static(); ++j) {
    Moments m;
    for (const auto& u : units)
      if (j < u.statics.size()) m.add(u.statics[j]);
    m.finish(s.static_mean[j], s.static_std[j]);
  }
  return s;
}

} // namespace gcsim
