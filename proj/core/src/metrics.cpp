#include "gcsim/metrics.hpp"

#include "gcsim/errors.hpp"

#include <cmath>
#include <fstream>

namespace gcsim {

namespace {

struct Aligned {
  std::size_t m, K, steps, n_units;
};

Aligned check_alignment(std::span<const SimulationResult> results, const Dataset& truth) {
  if (results.empty()) throw DataError("metrics: no simulation results");
  if (results.size() != truth.size())
    throw DataError("metrics: " + std::to_string(results.size()) + " results vs " +
                    std::to_string(truth.size()) + " truth units");
  Aligned a;
  a.m = results[0].start;
  a.K = results[0].horizon;
  a.steps = a.K - a.m;
  a.n_units = results.size();
  for (const auto& r : results)
    if (r.start != a.m || r.horizon != a.K)
      throw DataError("metrics: results disagree on simulation window");
  for (const auto& u : truth.units)
    if (u.length() < a.K) throw DataError("metrics: truth trajectory shorter than horizon");
  return a;
}

std::vector<std::size_t> cont_indices(const Schema& sc) {
  std::vector<std::size_t> idx;
  for (std::size_t j = sc.cont_offset(); j < sc.n_cov(); ++j) idx.push_back(j);
  return idx;
}

} // namespace

MetricReport percent_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                          double scale) {
  Aligned a = check_alignment(results, truth);
  const Schema& sc = truth.schema;
  std::size_t j = static_cast<std::size_t>(sc.outcome_index);
  if (sc.covariates[j].kind != VarKind::Continuous)
    throw DataError("percent_rmse: outcome covariate must be continuous");
  MetricReport rep;
  rep.name = "percent_rmse";
  rep.regime_id = results[0].regime_id;
  rep.n_units = a.n_units;
  rep.n_covariates = 1;
  rep.notes["scale"] = std::to_string(scale);
  double pooled = 0.0;
  for (std::size_t s = 0; s < a.steps; ++s) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.n_units; ++i) {
      double e = results[i].mean.at(s, j) - truth.units[i].cov.at(a.m + s, j);
      se += e * e;
    }
    pooled += se;
    rep.times.push_back(a.m + s);
    rep.per_time.push_back(std::sqrt(se / static_cast<double>(a.n_units)) / scale * 100.0);
  }
  rep.aggregate =
      std::sqrt(pooled / static_cast<double>(a.n_units * a.steps)) / scale * 100.0;
  return rep;
}

MetricReport individual_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                             const NormStats& norm) {
  Aligned a = check_alignment(results, truth);
  auto idx = cont_indices(truth.schema);
  if (idx.empty()) throw DataError("individual_rmse: no continuous covariates");
  MetricReport rep;
  rep.name = "individual_rmse";
  rep.regime_id = results[0].regime_id;
  rep.n_units = a.n_units;
  rep.n_covariates = idx.size();
  rep.notes["normalization"] = "pooled covariates are z-scored before squaring";
  double sum_units = 0.0;
  std::vector<double> per_cov_sq(idx.size(), 0.0);
  for (std::size_t i = 0; i < a.n_units; ++i) {
    double sq = 0.0;
    for (std::size_t s = 0; s < a.steps; ++s)
      for (std::size_t k = 0; k < idx.size(); ++k) {
        std::size_t j = idx[k];
        double e = (results[i].mean.at(s, j) - truth.units[i].cov.at(a.m + s, j)) / norm.cov_std[j];
        sq += e * e;
        per_cov_sq[k] += e * e * norm.cov_std[j] * norm.cov_std[j];
      }
    sum_units += std::sqrt(sq / static_cast<double>(a.steps * idx.size()));
  }
  rep.aggregate = sum_units / static_cast<double>(a.n_units);
  for (std::size_t k = 0; k < idx.size(); ++k)
    rep.per_covariate.emplace_back(
        truth.schema.covariates[idx[k]].name,
        std::sqrt(per_cov_sq[k] / static_cast<double>(a.n_units * a.steps)));
  return rep;
}

MetricReport population_rmse(std::span<const SimulationResult> results, const Dataset& truth,
                             const NormStats& norm) {
  Aligned a = check_alignment(results, truth);
  auto idx = cont_indices(truth.schema);
  if (idx.empty()) throw DataError("population_rmse: no continuous covariates");
  MetricReport rep;
  rep.name = "population_rmse";
  rep.regime_id = results[0].regime_id;
  rep.n_units = a.n_units;
  rep.n_covariates = idx.size();
  rep.notes["normalization"] = "pooled covariates are z-scored before squaring";
  double sq = 0.0;
  std::vector<double> per_cov_sq(idx.size(), 0.0);
  for (std::size_t s = 0; s < a.steps; ++s)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::size_t j = idx[k];
      double pred = 0.0, act = 0.0;
      for (std::size_t i = 0; i < a.n_units; ++i) {
        pred += results[i].mean.at(s, j);
        act += truth.units[i].cov.at(a.m + s, j);
      }
      double e = (pred - act) / static_cast<double>(a.n_units) / norm.cov_std[j];
      sq += e * e;
      per_cov_sq[k] += e * e * norm.cov_std[j] * norm.cov_std[j];
    }
  rep.aggregate = std::sqrt(sq / static_cast<double>(a.steps * idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    rep.per_covariate.emplace_back(truth.schema.covariates[idx[k]].name,
                                   std::sqrt(per_cov_sq[k] / static_cast<double>(a.steps)));
  return rep;
}

MetricReport rmse_over_time(std::span<const SimulationResult> results, const Dataset& truth,
                            const NormStats& norm) {
  Aligned a = check_alignment(results, truth);
  auto idx = cont_indices(truth.schema);
  if (idx.empty()) throw DataError("rmse_over_time: no continuous covariates");
  MetricReport rep;
  rep.name = "rmse_over_time";
  rep.regime_id = results[0].regime_id;
  rep.n_units = a.n_units;
  rep.n_covariates = idx.size();
  rep.notes["normalization"] = "pooled covariates are z-scored before squaring";
  double overall = 0.0;
  for (std::size_t s = 0; s < a.steps; ++s) {
    double sum_units = 0.0;
    for (std::size_t i = 0; i < a.n_units; ++i) {
      double sq = 0.0;
      for (std::size_t j : idx) {
        double e = (results[i].mean.at(s, j) - truth.units[i].cov.at(a.m + s, j)) / norm.cov_std[j];
        sq += e * e;
      }
      sum_units += std::sqrt(sq / static_cast<double>(idx.size()));
    }
    rep.times.push_back(a.m + s);
    rep.per_time.push_back(sum_units / static_cast<double>(a.n_units));
    overall += sum_units / static_cast<double>(a.n_units);
  }
  rep.aggregate = a.steps ? overall / static_cast<double>(a.steps) : 0.0;
  return rep;
}

MetricReport calibration(std::span<const SimulationResult> results, const Dataset& truth,
                         double q_low, double q_high) {
  Aligned a = check_alignment(results, truth);
  if (results[0].n_draws < 20)
    throw DataError("calibration: need at least 20 Monte Carlo draws for stable quantiles");
  if (!(q_low >= 0.0 && q_high <= 1.0 && q_low < q_high))
    throw UsageError("calibration: bad quantile pair");
  // The stored envelope is (0.05, 0.95); other pairs require stored draws.
  auto idx = cont_indices(truth.schema);
  MetricReport rep;
  rep.name = "calibration";
  rep.regime_id = results[0].regime_id;
  rep.n_units = a.n_units;
  rep.n_covariates = idx.size();
  rep.notes["interval"] = "inclusive";
  bool default_pair = std::abs(q_low - 0.05) < 1e-12 && std::abs(q_high - 0.95) < 1e-12;
  double total = 0.0;
  for (std::size_t s = 0; s < a.steps; ++s) {
    std::size_t inside = 0, cells = 0;
    for (std::size_t i = 0; i < a.n_units; ++i) {
      const SimulationResult& r = results[i];
      for (std::size_t j : idx) {
        double actual = truth.units[i].cov.at(a.m + s, j);
        double lo, hi;
        if (default_pair) {
          lo = r.q05.at(s, j);
          hi = r.q95.at(s, j);
        } else {
          if (r.draws.empty())
            throw DataError("calibration: non-default quantiles need stored draws");
          std::vector<double> buf(r.n_draws);
          for (std::size_t d = 0; d < r.n_draws; ++d) buf[d] = r.draws[d].at(s, j);
          std::sort(buf.begin(), buf.end());
          auto quant = [&](double p) {
            double pos = p * static_cast<double>(r.n_draws - 1);
            std::size_t k = static_cast<std::size_t>(pos);
            double frac = pos - static_cast<double>(k);
            return k + 1 < r.n_draws ? buf[k] * (1.0 - frac) + buf[k + 1] * frac : buf[k];
          };
          lo = quant(q_low);
          hi = quant(q_high);
        }
        inside += (actual >= lo && actual <= hi) ? 1 : 0;
        ++cells;
      }
    }
    rep.times.push_back(a.m + s);
    rep.per_time.push_back(cells ? static_cast<double>(inside) / static_cast<double>(cells) : 0.0);
    total += rep.per_time.back();
  }
  rep.aggregate = a.steps ? total / static_cast<double>(a.steps) : 0.0;
  return rep;
}

std::vector<double> event_probability(std::span<const SimulationResult> results,
                                      std::size_t cov_index, std::size_t w_begin,
                                      std::size_t w_end, const Schema& schema) {
  if (schema.covariates[cov_index].kind != VarKind::Categorical ||
      schema.covariates[cov_index].classes != 2)
    throw DataError("event_probability: covariate must be binary");
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    if (r.draws.empty()) throw DataError("event_probability: results lack stored draws");
    std::size_t hits = 0;
    for (const auto& d : r.draws) {
      bool occurred = false;
      for (std::size_t t = std::max(w_begin, r.start); t < std::min(w_end, r.horizon); ++t)
        if (d.at(t - r.start, cov_index) == 1.0) {
          occurred = true;
          break;
        }
      hits += occurred ? 1 : 0;
    }
    out.push_back(static_cast<double>(hits) / static_cast<double>(r.n_draws));
  }
  return out;
}

PredictiveCheckReport predictive_check(const ConditionalDensityEstimator& est,
                                       std::shared_ptr<const PolicyModel> policy,
                                       const Dataset& test, std::size_t k,
                                       const SimulationConfig& cfg, const ResidualBank& bank,
                                       int threads) {
  PredictiveCheckReport rep;
  if (k >= cfg.horizon) {
    rep.empty = true;
    return rep;
  }
  StochasticPolicyRegime regime("observational_policy", std::move(policy));
  SimulationConfig run = cfg;
  run.start = k;
  auto results = simulate_dataset(est, test, regime, run, bank, threads);
  const NormStats& norm = est.stats();
  rep.individual = individual_rmse(results, test, norm);
  rep.over_time = rmse_over_time(results, test, norm);
  rep.calib = calibration(results, test);
  return rep;
}

void write_metric_csv(const MetricReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os.precision(17);
  os << "metric,regime,time,value\n";
  for (std::size_t i = 0; i < report.per_time.size(); ++i)
    os << report.name << ',' << report.regime_id << ',' << report.times[i] << ','
       << report.per_time[i] << '\n';
  os << report.name << ',' << report.regime_id << ",aggregate," << report.aggregate << '\n';
}

void write_metric_summary(const MetricReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os.precision(17);
  os << "{\n";
  os << "  \"metric\": \"" << report.name << "\",\n";
  os << "  \"regime\": \"" << report.regime_id << "\",\n";
  os << "  \"aggregate\": " << report.aggregate << ",\n";
  os << "  \"n_units\": " << report.n_units << ",\n";
  os << "  \"n_covariates\": " << report.n_covariates << ",\n";
  os << "  \"config_hash\": \"" << report.config_hash << "\",\n";
  os << "  \"per_covariate\": {";
  for (std::size_t i = 0; i < report.per_covariate.size(); ++i)
    os << (i ? ", " : "") << '"' << report.per_covariate[i].first
       << "\": " << report.per_covariate[i].second;
  os << "},\n  \"notes\": {";
  std::size_t i = 0;
  for (const auto& [k, v] : report.notes) os << (i++ ? ", " : "") << '"' << k << "\": \"" << v << '"';
  os << "}\n}\n";
}

} // namespace gcsim
