#pragma once

#include "gcsim/regime.hpp"
#include "gcsim/schema.hpp"

#include <memory>
#include <string>

namespace gcsim {

/// Discrete-time PK/PD tumor growth: logistic regrowth toward a carrying
/// capacity, chemotherapy acting through a decaying drug concentration,
/// radiotherapy through a linear-quadratic dose kill, multiplicative
/// Gaussian noise, and per-unit hidden response parameters. Treatment
/// assignment under the observational regime is a logistic function of
/// recent mean volume, creating time-varying confounding.
struct TumorSimConfig {
  std::size_t n_units = 10000;
  std::size_t horizon = 40;       // K
  std::size_t cf_window = 4;      // counterfactual steps at the end
  double max_volume = 1150.0;     // carrying capacity and hard bound (cm^3)
  double growth_mean = 0.08;      // per-unit log-growth rate rho
  double growth_sd = 0.02;
  double chemo_effect_mean = 0.11; // kill per unit concentration
  double chemo_effect_sd = 0.025;
  double chemo_decay = 0.5;        // concentration carried to the next step
  double chemo_dose = 1.0;
  double radio_alpha_mean = 0.07;  // linear kill per Gy
  double radio_alpha_sd = 0.015;
  double radio_beta_ratio = 10.0;  // alpha/beta (Gy)
  double radio_dose = 2.0;         // Gy per administration
  double noise_sd = 0.03;
  std::size_t policy_window = 12;  // recent-volume window driving treatment
  double policy_gamma = 6.0;       // logistic sharpness
  double policy_center_frac = 0.25; // volume fraction of max at p = 0.5
  double init_log_mean = 3.6;      // initial volume ~ exp(N(mean, sd))
  double init_log_sd = 0.9;
  std::uint64_t seed = 1;

  std::size_t switch_time() const { return horizon - cf_window; } // m
};

Schema tumor_schema();

/// Observational trajectories for unit ids [unit_begin, unit_begin+n).
/// Splits use disjoint id ranges of the same process.
Dataset gen_tumor_observational(const TumorSimConfig& cfg, std::size_t unit_begin,
                                std::size_t n_units);

/// Counterfactual twins of the same unit ids: identical noise and hidden
/// parameters, with the regime overriding treatment for the final cf_window
/// targets. regime_id is one of no_treat / radio_only / chemo_only /
/// chemo_radio.
Dataset gen_tumor_counterfactual(const TumorSimConfig& cfg, std::size_t unit_begin,
                                 std::size_t n_units, const std::string& regime_id);

/// The matching regime object for the simulator.
std::unique_ptr<TreatmentRegime> tumor_regime(const TumorSimConfig& cfg,
                                              const std::string& regime_id);

const std::vector<std::string>& tumor_regime_ids();

} // namespace gcsim
