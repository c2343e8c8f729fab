#pragma once

#include "gcsim/datagen_hemo.hpp"
#include "gcsim/datagen_mdp.hpp"
#include "gcsim/datagen_tumor.hpp"
#include "gcsim/gcomp.hpp"
#include "gcsim/linear_estimator.hpp"
#include "gcsim/training.hpp"
#include "gcsim/transformer_estimator.hpp"

#include <string>
#include <vector>

namespace gcsim {

/// One experiment: generator, model, training, simulation, and evaluation
/// sections. Loaded from a JSON file; command-line `--set a.b=c` overrides
/// individual fields; the effective merged config is dumped beside every
/// output.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 2;

  struct Generator {
    std::string kind = "tumor"; // tumor | hemo | oracle
    std::size_t n_train = 10000, n_val = 1000, n_test = 1000;
    TumorSimConfig tumor;
    HemoSimConfig hemo;
    OracleMdpConfig mdp;
  } generator;

  struct Model {
    std::string kind = "transformer"; // transformer | linear
    TransformerHyperparams transformer;
    LinearConfig linear;
  } model;

  TrainConfig train;

  struct Simulation {
    std::size_t n_draws = 100;
    int start = -1;   // -1: dataset switch time
    int horizon = -1; // -1: dataset trajectory length
    bool store_draws = false;
    bool joint_residual_draws = false;
    bool clip_to_bounds = false; // physical clipping (e.g. tumor volume)
    std::vector<std::string> regimes;
  } simulation;

  struct Evaluation {
    std::vector<std::string> metrics = {"individual_rmse", "population_rmse", "rmse_over_time",
                                        "calibration"};
    double q_low = 0.05, q_high = 0.95;
  } evaluation;
};

/// Parses the file (or defaults when path is empty) and applies overrides
/// of the form "section.field=value".
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

/// Canonical serialization of the effective config.
std::string dump_experiment_config(const ExperimentConfig& cfg);
void write_experiment_config(const ExperimentConfig& cfg, const std::string& path);

/// FNV-1a hex digest of the canonical serialization; stamped into every
/// output file.
std::string experiment_config_hash(const ExperimentConfig& cfg);

} // namespace gcsim
