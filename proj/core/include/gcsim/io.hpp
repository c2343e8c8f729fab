#pragma once

#include "gcsim/gcomp.hpp"
#include "gcsim/linear_estimator.hpp"
#include "gcsim/policy.hpp"
#include "gcsim/transformer_estimator.hpp"

#include <memory>
#include <string>
#include <vector>

namespace gcsim {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Dataset file: text (JSON) header carrying the schema, normalization
/// stats, and generator metadata, followed by a little-endian binary body
/// of trajectories. Self-describing and bitwise round-tripping.
void save_dataset(const Dataset& ds, const std::string& path, const std::string& config_hash = "");
Dataset load_dataset(const std::string& path);
/// Lossless text export for inspection: <prefix>.schema.json and
/// <prefix>.units.csv.
void export_dataset_csv(const Dataset& ds, const std::string& prefix);

/// Checkpoint: model kind, schema, hyperparameters, every parameter tensor,
/// the residual bank, the training-log digest, and the seed. Loading
/// reproduces identical simulation outputs given identical seeds.
struct Checkpoint {
  std::string kind; // transformer | linear | policy
  std::uint64_t seed = 0;
  std::string config_hash;
  std::uint64_t train_digest = 0;
  std::unique_ptr<TransformerEstimator> transformer;
  std::unique_ptr<LinearEstimator> linear;
  std::shared_ptr<PolicyModel> policy;
  ResidualBank bank;

  const ConditionalDensityEstimator& estimator() const;
};
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Simulation results: the dataset file format extended with the regime id
/// and simulation window; per unit the mean trajectory, the (q05, q95)
/// envelope, and optionally every draw.
struct ResultsFile {
  Schema schema;
  NormStats stats;
  std::string regime_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t start = 0, horizon = 0, n_draws = 0;
  std::vector<SimulationResult> units;
};
void save_results(const ResultsFile& rf, const std::string& path);
ResultsFile load_results(const std::string& path);

/// FNV-1a over a file's bytes, for reproducibility checks.
std::uint64_t file_digest(const std::string& path);

} // namespace gcsim
