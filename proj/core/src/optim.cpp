#include "gcsim/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gcsim {

int ParamSet::add(std::string name, Tensor init) {
  Param p;
  p.name = std::move(name);
  p.grad = Tensor(init.shape());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size() - 1);
}

int ParamSet::add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w({fan_in, fan_out});
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(w));
}

int ParamSet::add_zeros(std::string name, std::vector<std::size_t> shape) {
  return add(std::move(name), Tensor(std::move(shape)));
}

int ParamSet::add_ones(std::string name, std::vector<std::size_t> shape) {
  return add(std::move(name), Tensor::full(std::move(shape), 1.0));
}

void ParamSet::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<Tensor> ParamSet::snapshot_values() const {
  std::vector<Tensor> snap;
  snap.reserve(params_.size());
  for (const auto& p : params_) snap.push_back(p.value);
  return snap;
}

void ParamSet::restore_values(const std::vector<Tensor>& snap) {
  if (snap.size() != params_.size())
    throw std::invalid_argument("restore_values: snapshot size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) params_[i].value = snap[i];
}

std::vector<Tensor> ParamSet::make_grad_sink() const {
  std::vector<Tensor> sink;
  sink.reserve(params_.size());
  for (const auto& p : params_) sink.emplace_back(p.value.shape());
  return sink;
}

void ParamSet::accumulate_grads(const std::vector<Tensor>& sink) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& g = params_[i].grad;
    const Tensor& s = sink[i];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += s[j];
  }
}

double CosineRestartSchedule::at(int epoch) const {
  if (epoch < 0) throw std::invalid_argument("lr schedule: negative epoch");
  int e = t0 > 0 ? epoch % t0 : 0;
  double frac = t0 > 0 ? static_cast<double>(e) / static_cast<double>(t0) : 0.0;
  return eta_min + 0.5 * (base - eta_min) * (1.0 + std::cos(M_PI * frac));
}

void Adam::step(ParamSet& params, double lr) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.count(); ++i) {
      m_.emplace_back(params[i].value.shape());
      v_.emplace_back(params[i].value.shape());
    }
  }
  if (m_.size() != params.count())
    throw std::invalid_argument("adam: parameter count changed mid-run");
  ++step_count_;
  double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Param& p = params[i];
    if (!p.grad.same_shape(p.value))
      throw std::invalid_argument("adam: grad/param shape mismatch for " + p.name);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      double g = p.grad[j];
      if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * p.value[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[j] / b1t;
      double vhat = v[j] / b2t;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

} // namespace gcsim
