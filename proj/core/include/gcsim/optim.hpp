#pragma once

#include "gcsim/rng.hpp"
#include "gcsim/tensor.hpp"

#include <string>
#include <vector>

namespace gcsim {

/// Named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Flat parameter store; indices are stable handles used by model code.
class ParamSet {
public:
  int add(std::string name, Tensor init);
  int add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
  int add_zeros(std::string name, std::vector<std::size_t> shape);
  int add_ones(std::string name, std::vector<std::size_t> shape);

  std::size_t count() const { return params_.size(); }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }

  void zero_grads();
  /// Snapshot / restore of values only (optimizer state untouched).
  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& snap);
  /// Fresh zero gradient buffers shaped like the parameters, for
  /// per-thread accumulation with deterministic reduction.
  std::vector<Tensor> make_grad_sink() const;
  void accumulate_grads(const std::vector<Tensor>& sink);

private:
  std::vector<Param> params_;
};

/// Cosine-annealing learning-rate schedule with warm restarts: the rate
/// decays from base to eta_min over each period of length t0 and snaps
/// back to base at every multiple of t0.
struct CosineRestartSchedule {
  double base = 1e-4;
  double eta_min = 1e-5;
  int t0 = 10;

  double at(int epoch) const;
};

/// Bias-corrected adaptive-moment optimizer over a ParamSet.
class Adam {
public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam() = default;
  explicit Adam(Config cfg) : cfg_(cfg) {}

  /// Applies one update in place using each param's accumulated grad.
  void step(ParamSet& params, double lr);

  long step_count() const { return step_count_; }
  const Config& config() const { return cfg_; }

private:
  Config cfg_;
  std::vector<Tensor> m_, v_; // lazily sized to the param set
  long step_count_ = 0;
};

} // namespace gcsim
