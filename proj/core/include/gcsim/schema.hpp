#pragma once

#include "gcsim/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gcsim {

enum class VarKind { Continuous, Categorical };

struct CovariateSpec {
  std::string name;
  VarKind kind = VarKind::Continuous;
  int classes = 0; // categorical only
};

struct TreatmentSpec {
  std::string name;
  VarKind kind = VarKind::Continuous; // Categorical here means binary indicator
};

/// Ordered covariate layout shared by estimators, simulators, and files.
/// Simulation order is fixed: the categorical block precedes the continuous
/// block, and the outcome is a designated covariate (housed in the next
/// step's covariate vector).
struct Schema {
  std::vector<CovariateSpec> covariates;
  std::vector<TreatmentSpec> treatments;
  std::vector<std::string> static_names;
  int outcome_index = -1;

  std::size_t n_cov() const { return covariates.size(); }
  std::size_t n_treat() const { return treatments.size(); }
  std::size_t n_static() const { return static_names.size(); }
  std::size_t n_cat() const;
  std::size_t n_cont() const { return n_cov() - n_cat(); }
  /// Total width of the one-hot encoding of the categorical block.
  std::size_t onehot_width() const;
  /// Index of the first continuous covariate (== n_cat()).
  std::size_t cont_offset() const { return n_cat(); }

  /// Throws DataError on partition violations or a missing outcome column.
  void validate() const;
  bool operator==(const Schema& other) const;
};

/// One unit: static features plus T x d covariate and T x a treatment rows
/// (raw units; categorical cells hold the class index).
struct Trajectory {
  std::vector<double> statics;
  Tensor cov;   // (T, n_cov)
  Tensor treat; // (T, n_treat)

  std::size_t length() const { return cov.rows(); }
};

struct DatasetMeta {
  std::string generator;
  std::string regime_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  int switch_time = -1; // m; -1 when not applicable
  std::map<std::string, std::string> extra;
};

/// Per-column z-score statistics from a training split. Categorical
/// covariates and binary treatments carry the identity transform.
struct NormStats {
  std::vector<double> cov_mean, cov_std;
  std::vector<double> treat_mean, treat_std;
  std::vector<double> static_mean, static_std;

  bool empty() const { return cov_mean.empty(); }
  double z_cov(std::size_t j, double v) const { return (v - cov_mean[j]) / cov_std[j]; }
  double un_z_cov(std::size_t j, double z) const { return z * cov_std[j] + cov_mean[j]; }
  double z_treat(std::size_t j, double v) const { return (v - treat_mean[j]) / treat_std[j]; }
};

struct Dataset {
  Schema schema;
  DatasetMeta meta;
  NormStats stats; // may be empty until a training split computes them
  std::vector<Trajectory> units;

  std::size_t size() const { return units.size(); }
};

/// z-score statistics over all units/time steps; std floored at 1e-8 so a
/// constant column maps to zero rather than NaN. Categorical and binary
/// columns get mean 0 / std 1.
NormStats compute_norm_stats(const Schema& schema, const std::vector<Trajectory>& units);

} // namespace gcsim
