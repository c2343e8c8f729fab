#pragma once

// Lag-1 linear-Gaussian test system with a closed-form conditional mean:
//   L_{t+1} = A L_t + B a_t + c + eps,  eps ~ N(0, diag(sigma^2)).
// Used as an independent oracle for fit_linear_gcomp coefficient recovery,
// Monte Carlo mean convergence, and residual-bank fidelity.

#include "gcsim/rng.hpp"
#include "gcsim/schema.hpp"

#include <vector>

namespace gcsim::testing {

struct LinearSystem {
  std::size_t d = 2;      // continuous covariates
  std::size_t n_treat = 1;
  std::vector<double> A;  // d x d, row-major
  std::vector<double> B;  // d x n_treat
  std::vector<double> c;  // d
  std::vector<double> sigma; // d
  double treat_prob = 0.4;

  static LinearSystem standard() {
    LinearSystem s;
    s.A = {0.8, 0.1, -0.05, 0.7};
    s.B = {0.5, -0.3};
    s.c = {0.2, -0.1};
    s.sigma = {0.3, 0.2};
    return s;
  }

  Schema schema() const {
    Schema sc;
    for (std::size_t j = 0; j < d; ++j)
      sc.covariates.push_back({"x" + std::to_string(j), VarKind::Continuous, 0});
    for (std::size_t j = 0; j < n_treat; ++j)
      sc.treatments.push_back({"a" + std::to_string(j), VarKind::Categorical});
    sc.outcome_index = 0;
    sc.validate();
    return sc;
  }

  std::vector<double> step_mean(const double* x, const double* a) const {
    std::vector<double> mu(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      mu[i] = c[i];
      for (std::size_t j = 0; j < d; ++j) mu[i] += A[i * d + j] * x[j];
      for (std::size_t j = 0; j < n_treat; ++j) mu[i] += B[i * n_treat + j] * a[j];
    }
    return mu;
  }

  Dataset generate(std::size_t n_units, std::size_t horizon, std::uint64_t seed) const {
    Dataset ds;
    ds.schema = schema();
    ds.meta.generator = "linear_toy";
    ds.meta.seed = seed;
    ds.meta.regime_id = "observational";
    for (std::size_t u = 0; u < n_units; ++u) {
      Rng rng(derive_seed(seed, "linear.unit", u));
      Trajectory traj;
      traj.cov = Tensor({horizon, d});
      traj.treat = Tensor({horizon, n_treat});
      std::vector<double> x(d);
      for (auto& v : x) v = rng.normal();
      for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t j = 0; j < d; ++j) traj.cov.at(t, j) = x[j];
        std::vector<double> a(n_treat);
        for (std::size_t j = 0; j < n_treat; ++j) {
          a[j] = rng.bernoulli(treat_prob) ? 1.0 : 0.0;
          traj.treat.at(t, j) = a[j];
        }
        std::vector<double> mu = step_mean(x.data(), a.data());
        for (std::size_t j = 0; j < d; ++j) x[j] = mu[j] + sigma[j] * rng.normal();
      }
      ds.units.push_back(std::move(traj));
    }
    ds.stats = compute_norm_stats(ds.schema, ds.units);
    return ds;
  }

  /// Exact conditional mean trajectory under a fixed action sequence,
  /// starting from state x at the last observed row.
  std::vector<std::vector<double>> mean_trajectory(const double* x0, std::size_t steps,
                                                   const std::vector<double>& action) const {
    std::vector<std::vector<double>> out;
    std::vector<double> x(x0, x0 + d);
    for (std::size_t s = 0; s < steps; ++s) {
      x = step_mean(x.data(), action.data());
      out.push_back(x);
    }
    return out;
  }
};

} // namespace gcsim::testing
