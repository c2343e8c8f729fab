#pragma once

#include "gcsim/regime.hpp"
#include "gcsim/schema.hpp"

#include <memory>
#include <string>

namespace gcsim {

/// Lumped-parameter hemodynamic surrogate: total blood volume and peripheral
/// resistance decay toward per-unit hidden floors (capillary leak and
/// vasodilation), fluids raise TBV, vasopressors raise TPR, and pressures,
/// flows, and downstream organ covariates derive from them each step.
/// The observational policy treats with probability increasing as MAP and
/// CVP decrease, with dose means inversely proportional to both; every
/// policy driver is an emitted covariate.
struct HemoSimConfig {
  std::size_t n_units = 12000;
  std::size_t horizon = 66;  // K
  std::size_t switch_time = 34; // m: regimes diverge from action row m-1
  double noise_scale = 1.0;  // global multiplier on process noise
  // Leak / vasodilation dynamics.
  double tbv_leak = 0.10;
  double tpr_leak = 0.12;
  double fluid_gain = 0.9;
  double vaso_gain = 0.12;
  // Observational policy coefficients (logistic treat-probability and
  // normal dose means over MAP and CVP deficits).
  double fluid_p0 = 0.2, fluid_p_map = 0.10, fluid_p_cvp = 0.18;
  double fluid_d0 = 350.0, fluid_d_map = 20.0, fluid_d_cvp = 25.0, fluid_d_sd = 90.0;
  double fluid_min = 100.0, fluid_max = 1200.0;
  double vaso_p0 = -0.1, vaso_p_map = 0.13;
  double vaso_d0 = 2.2, vaso_d_map = 0.35, vaso_d_sd = 0.8;
  double vaso_min = 0.5, vaso_max = 8.0;
  std::uint64_t seed = 1;
};

Schema hemo_schema();

/// Index of a named covariate in the hemo schema (MAP, CVP, ... ).
std::size_t hemo_cov_index(const std::string& name);

Dataset gen_hemo_observational(const HemoSimConfig& cfg, std::size_t unit_begin,
                               std::size_t n_units);

/// Counterfactual twins: identical process noise and hidden parameters,
/// identical policy through action row m-2, then `which` in {c1, c2}.
/// c1 is a deterministic threshold rule with different coefficients;
/// c2 always withholds.
Dataset gen_hemo_counterfactual(const HemoSimConfig& cfg, std::size_t unit_begin,
                                std::size_t n_units, const std::string& which);

/// Matching regime objects for the simulator.
std::unique_ptr<TreatmentRegime> hemo_regime(const HemoSimConfig& cfg, const std::string& which);

} // namespace gcsim
