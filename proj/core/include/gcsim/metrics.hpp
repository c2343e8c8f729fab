#pragma once

#include "gcsim/gcomp.hpp"
#include "gcsim/policy.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace gcsim {

/// One evaluation protocol's output: per-time series plus the documented
/// aggregate. Continuous covariates pool in normalized units so no single
/// scale dominates; raw per-covariate breakdowns ride along in
/// per_covariate.
struct MetricReport {
  std::string name;
  std::string regime_id;
  std::vector<std::size_t> times; // absolute target times
  std::vector<double> per_time;
  double aggregate = 0.0;
  std::size_t n_units = 0;
  std::size_t n_covariates = 0;
  std::vector<std::pair<std::string, double>> per_covariate; // raw units
  std::string config_hash;
  std::map<std::string, std::string> notes;
};

/// RMSE over units at each horizon step, divided by `scale` and expressed
/// in percent; the overall aggregate pools squared errors across steps.
/// Defined for the (single continuous) outcome covariate.
MetricReport percent_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                          double scale = 1150.0);

/// Per-unit RMSE over (time x continuous covariate) cells in normalized
/// units, averaged over units.
MetricReport individual_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                             const NormStats& norm);

/// RMSE between the unit-averaged predicted and true trajectories.
MetricReport population_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                             const NormStats& norm);

/// individual_rmse restricted to each time step.
MetricReport rmse_over_time(std::span<const SimulationResult> results, const Dataset& truth,
                            const NormStats& norm);

/// Fraction of (unit, continuous covariate) cells whose truth lies inside
/// the inclusive [q_low, q_high] empirical envelope of the draws, per time.
/// Requires n_draws >= 20.
MetricReport calibration(std::span<const SimulationResult> results, const Dataset& truth,
                         double q_low = 0.05, double q_high = 0.95);

/// Per-unit probability that a binary covariate takes class 1 anywhere in
/// the absolute time window [w_begin, w_end). Requires stored draws.
std::vector<double> event_probability(std::span<const SimulationResult> results,
                                      std::size_t cov_index, std::size_t w_begin,
                                      std::size_t w_end, const Schema& schema);

struct PredictiveCheckReport {
  MetricReport individual;
  MetricReport over_time;
  MetricReport calib;
  bool empty = false;
};

/// Simulates the test set under the fitted observational policy from time k
/// and scores against the held-out factual trajectories.
PredictiveCheckReport predictive_check(const ConditionalDensityEstimator& est,
                                       std::shared_ptr<const PolicyModel> policy,
                                       const Dataset& test, std::size_t k,
                                       const SimulationConfig& cfg, const ResidualBank& bank,
                                       int threads = 2);

/// CSV rows (one per time step) plus a JSON-style summary block.
void write_metric_csv(const MetricReport& report, const std::string& path);
void write_metric_summary(const MetricReport& report, const std::string& path);

} // namespace gcsim
