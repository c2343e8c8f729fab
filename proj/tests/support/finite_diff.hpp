#pragma once

// Central finite-difference gradient oracle, independent of the tape's
// backward pass: perturbs one input entry at a time and re-runs the given
// forward function.

#include "gcsim/tensor.hpp"

#include <cmath>
#include <functional>

namespace gcsim::testing {

/// d loss / d x[i] by central differences at perturbation h.
inline double finite_diff_at(const std::function<double(const Tensor&)>& f, Tensor x,
                             std::size_t i, double h = 1e-5) {
  double orig = x[i];
  x[i] = orig + h;
  double up = f(x);
  x[i] = orig - h;
  double down = f(x);
  x[i] = orig;
  return (up - down) / (2.0 * h);
}

/// Max relative error between an analytic gradient and the FD oracle,
/// with an absolute floor so near-zero entries compare sanely.
inline double max_rel_error(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            const Tensor& grad, double h = 1e-5, double floor_ = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double fd = finite_diff_at(f, x, i, h);
    double denom = std::max({std::abs(fd), std::abs(grad[i]), floor_});
    worst = std::max(worst, std::abs(fd - grad[i]) / denom);
  }
  return worst;
}

} // namespace gcsim::testing
