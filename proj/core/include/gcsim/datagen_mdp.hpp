#pragma once

#include "gcsim/regime.hpp"
#include "gcsim/schema.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gcsim {

/// Small tabular Markov system over a joint categorical state with a binary
/// treatment: the ground-truth system whose counterfactual distributions can
/// be enumerated exactly.
struct MdpSystem {
  std::vector<int> classes;  // per covariate, outermost first
  Tensor transition;         // (n_states * 2, n_states), row-stochastic
  std::vector<double> treat_prob; // observational policy: P(A=1 | state)

  std::size_t n_states() const;
  std::size_t state_index(const double* cov_row) const;
  void state_classes(std::size_t s, double* cov_row) const;
  Schema make_schema() const;
  void validate() const;
};

struct OracleMdpConfig {
  std::vector<int> classes = {3, 2};
  std::size_t horizon = 6;     // K
  std::size_t n_units = 2000;
  std::uint64_t seed = 1;
  /// Leave empty to generate a seeded random system.
  Tensor transition;
  std::vector<double> treat_prob;
  /// Copies the untreated transition rows over the treated ones, making the
  /// system insensitive to treatment.
  bool action_insensitive = false;
  std::size_t max_paths = 10000;
};

/// Builds the full tabular system (random rows when not given).
MdpSystem make_mdp_system(const OracleMdpConfig& cfg);

/// Samples trajectories under the tabular observational policy.
Dataset gen_oracle_mdp(const OracleMdpConfig& cfg);

/// Round-trips the system through the dataset metadata block so the file is
/// self-describing.
std::string serialize_mdp_system(const MdpSystem& sys);
MdpSystem parse_mdp_system(const std::string& text);

/// Exact counterfactual distribution over joint states at time `target`
/// (0-indexed covariate row), given observed covariate rows [0, m) and the
/// (deterministic) regime taking over actions from row m-1: the g-formula
/// evaluated by summing over every covariate path. Throws when the regime
/// is stochastic or the path count exceeds cfg-like `max_paths`.
std::vector<double> exact_gformula(const MdpSystem& sys, const Trajectory& prefix, std::size_t m,
                                   TreatmentRegime& regime, std::size_t target,
                                   std::size_t max_paths = 10000);

} // namespace gcsim
