#include "gcsim/linear_estimator.hpp"

#include "gcsim/errors.hpp"
#include "gcsim/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gcsim {

namespace {

// Cholesky solve of A x = b for SPD A (in-place copy); returns false if a
// non-positive pivot shows up.
bool cholesky_solve(std::vector<double> a, std::size_t n, std::vector<std::vector<double>>& rhs) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 1e-12) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  for (auto& b : rhs) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
      b[i] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
      b[i] = s / a[i * n + i];
    }
  }
  return true;
}

} // namespace

LinearEstimator::LinearEstimator(Schema schema, NormStats stats, LinearConfig cfg)
    : schema_(std::move(schema)), stats_(std::move(stats)), cfg_(cfg) {
  schema_.validate();
  if (cfg_.lag_window < 1) throw UsageError("linear estimator: lag_window must be >= 1");
}

std::size_t LinearEstimator::lag_width() const {
  return schema_.onehot_width() + schema_.n_cont() + schema_.n_treat();
}

std::size_t LinearEstimator::base_features() const {
  return cfg_.lag_window * lag_width() + schema_.n_static() + 1;
}

void LinearEstimator::encode_lag_row(const double* cov, const double* treat, double* dst) const {
  encode_onehot(schema_, cov, dst);
  std::size_t pos = schema_.onehot_width();
  for (std::size_t j = schema_.cont_offset(); j < schema_.n_cov(); ++j)
    dst[pos++] = stats_.z_cov(j, cov[j]);
  for (std::size_t j = 0; j < schema_.n_treat(); ++j) dst[pos++] = stats_.z_treat(j, treat[j]);
}

void LinearEstimator::base_features_for(const Trajectory& unit, std::size_t t, double* dst) const {
  std::size_t w = lag_width();
  std::fill_n(dst, base_features(), 0.0);
  for (std::size_t lag = 1; lag <= cfg_.lag_window; ++lag) {
    if (t < lag) break; // earlier lags do not exist; stay zero
    std::size_t src = t - lag;
    encode_lag_row(unit.cov.data() + src * schema_.n_cov(),
                   unit.treat.data() + src * schema_.n_treat(), dst + (lag - 1) * w);
  }
  std::size_t pos = cfg_.lag_window * w;
  for (std::size_t j = 0; j < schema_.n_static(); ++j)
    dst[pos++] = (unit.statics[j] - stats_.static_mean[j]) / stats_.static_std[j];
  dst[pos] = 1.0;
}

void LinearEstimator::cat_probs_row(std::size_t d, const double* base, const int* earlier,
                                    double* out) const {
  const Tensor& W = cat_weights_[d];
  std::size_t F0 = base_features();
  std::size_t C = W.dim(1);
  // logits = W^T [base | onehot(earlier)]
  std::vector<double> logits(C, 0.0);
  for (std::size_t f = 0; f < F0; ++f) {
    double x = base[f];
    if (x == 0.0) continue;
    for (std::size_t c = 0; c < C; ++c) logits[c] += x * W.at(f, c);
  }
  std::size_t pos = F0;
  for (std::size_t e = 0; e < d; ++e) {
    std::size_t ce = static_cast<std::size_t>(schema_.covariates[e].classes);
    std::size_t f = pos + static_cast<std::size_t>(earlier[e]);
    for (std::size_t c = 0; c < C; ++c) logits[c] += W.at(f, c);
    pos += ce;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = std::exp(logits[c] - mx);
    sum += out[c];
  }
  for (std::size_t c = 0; c < C; ++c) out[c] /= sum;
}

void LinearEstimator::cont_means_row(const double* base, const int* cat_block, double* out) const {
  std::size_t F0 = base_features();
  std::size_t D = schema_.n_cont();
  std::fill_n(out, D, 0.0);
  for (std::size_t f = 0; f < F0; ++f) {
    double x = base[f];
    if (x == 0.0) continue;
    for (std::size_t dd = 0; dd < D; ++dd) out[dd] += x * cont_weights_.at(f, dd);
  }
  std::size_t pos = F0;
  for (std::size_t e = 0; e < schema_.n_cat(); ++e) {
    std::size_t f = pos + static_cast<std::size_t>(cat_block[e]);
    for (std::size_t dd = 0; dd < D; ++dd) out[dd] += cont_weights_.at(f, dd);
    pos += static_cast<std::size_t>(schema_.covariates[e].classes);
  }
}

void LinearEstimator::fit(std::span<const Trajectory> units) {
  if (units.empty()) throw DataError("linear fit: no training units");
  std::size_t F0 = base_features();
  std::size_t n_rows = 0;
  for (const auto& u : units) n_rows += u.length() > 1 ? u.length() - 1 : 0;
  if (n_rows == 0) throw DataError("linear fit: no usable targets");

  // Continuous block: one shared design (base + full categorical one-hot),
  // streamed into normal equations.
  if (schema_.n_cont() > 0) {
    std::size_t F = F0 + schema_.onehot_width();
    std::size_t D = schema_.n_cont();
    std::vector<double> xtx(F * F, 0.0);
    std::vector<std::vector<double>> xty(D, std::vector<double>(F, 0.0));
    std::vector<double> x(F, 0.0);
    for (const auto& u : units) {
      for (std::size_t t = 1; t < u.length(); ++t) {
        base_features_for(u, t, x.data());
        if (schema_.n_cat() > 0)
          encode_onehot(schema_, u.cov.data() + t * schema_.n_cov(), x.data() + F0);
        for (std::size_t i = 0; i < F; ++i) {
          if (x[i] == 0.0) continue;
          for (std::size_t j = 0; j <= i; ++j) xtx[i * F + j] += x[i] * x[j];
        }
        for (std::size_t dd = 0; dd < D; ++dd) {
          double y = stats_.z_cov(schema_.cont_offset() + dd, u.cov.at(t, schema_.cont_offset() + dd));
          if (y == 0.0) continue;
          for (std::size_t i = 0; i < F; ++i) xty[dd][i] += x[i] * y;
        }
      }
    }
    for (std::size_t i = 0; i < F; ++i)
      for (std::size_t j = i + 1; j < F; ++j) xtx[i * F + j] = xtx[j * F + i];

    double lambda = cfg_.ridge;
    auto with_ridge = [&](double lam) {
      std::vector<double> a = xtx;
      if (lam > 0.0)
        for (std::size_t i = 0; i < F; ++i) a[i * F + i] += lam;
      std::vector<std::vector<double>> rhs = xty;
      if (!cholesky_solve(std::move(a), F, rhs)) return false;
      cont_weights_ = Tensor({F, D});
      for (std::size_t dd = 0; dd < D; ++dd)
        for (std::size_t i = 0; i < F; ++i) cont_weights_.at(i, dd) = rhs[dd][i];
      return true;
    };
    if (!with_ridge(lambda)) {
      double trace = 0.0;
      for (std::size_t i = 0; i < F; ++i) trace += xtx[i * F + i];
      lambda = std::max(1e-8 * trace / static_cast<double>(F), 1e-10);
      while (!with_ridge(lambda)) lambda *= 10.0;
    }
    ridge_used_ = lambda;
  }

  // Categorical covariates: multinomial logistic, full-batch Adam.
  cat_weights_.clear();
  for (std::size_t d = 0; d < schema_.n_cat(); ++d) {
    std::size_t extra = 0;
    for (std::size_t e = 0; e < d; ++e) extra += static_cast<std::size_t>(schema_.covariates[e].classes);
    std::size_t F = F0 + extra;
    std::size_t C = static_cast<std::size_t>(schema_.covariates[d].classes);

    // Design rows cached once; F is small.
    std::vector<double> X(n_rows * F);
    std::vector<int> y(n_rows);
    std::size_t r = 0;
    for (const auto& u : units)
      for (std::size_t t = 1; t < u.length(); ++t, ++r) {
        double* row = X.data() + r * F;
        base_features_for(u, t, row);
        std::size_t pos = F0;
        for (std::size_t e = 0; e < d; ++e) {
          std::size_t ce = static_cast<std::size_t>(schema_.covariates[e].classes);
          int cls = static_cast<int>(std::lround(u.cov.at(t, e)));
          row[pos + static_cast<std::size_t>(cls)] = 1.0;
          pos += ce;
        }
        y[r] = static_cast<int>(std::lround(u.cov.at(t, d)));
      }

    ParamSet ps;
    int w_idx = ps.add("w", Tensor({F, C}));
    Adam adam;
    std::vector<double> logits(C), probs(C);
    for (int iter = 0; iter < cfg_.logistic_iters; ++iter) {
      ps.zero_grads();
      Tensor& W = ps[w_idx].value;
      Tensor& G = ps[w_idx].grad;
      for (std::size_t rr = 0; rr < n_rows; ++rr) {
        const double* row = X.data() + rr * F;
        std::fill(logits.begin(), logits.end(), 0.0);
        for (std::size_t f = 0; f < F; ++f) {
          double v = row[f];
          if (v == 0.0) continue;
          for (std::size_t c = 0; c < C; ++c) logits[c] += v * W.at(f, c);
        }
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          probs[c] = std::exp(logits[c] - mx);
          sum += probs[c];
        }
        for (std::size_t c = 0; c < C; ++c) probs[c] /= sum;
        probs[static_cast<std::size_t>(y[rr])] -= 1.0;
        for (std::size_t f = 0; f < F; ++f) {
          double v = row[f];
          if (v == 0.0) continue;
          for (std::size_t c = 0; c < C; ++c) G.at(f, c) += v * probs[c];
        }
      }
      double inv_n = 1.0 / static_cast<double>(n_rows);
      for (std::size_t i = 0; i < G.size(); ++i) G[i] *= inv_n;
      adam.step(ps, cfg_.logistic_lr);
    }
    cat_weights_.push_back(ps[w_idx].value);
  }
}

ConditionalDensityEstimator::TeacherForced
LinearEstimator::predict_teacher_forced(const Trajectory& unit) const {
  std::size_t T = unit.length();
  if (T < 2) throw DataError("linear predict: trajectory too short");
  TeacherForced out;
  std::size_t F0 = base_features();
  std::vector<double> base(F0);
  std::vector<int> classes(schema_.n_cat());
  if (schema_.n_cat() > 0) out.cat_probs = Tensor({T - 1, schema_.onehot_width()});
  if (schema_.n_cont() > 0) out.cont_means = Tensor({T - 1, schema_.n_cont()});
  for (std::size_t t = 1; t < T; ++t) {
    base_features_for(unit, t, base.data());
    for (std::size_t e = 0; e < schema_.n_cat(); ++e)
      classes[e] = static_cast<int>(std::lround(unit.cov.at(t, e)));
    if (schema_.n_cat() > 0) {
      std::size_t c0 = 0;
      for (std::size_t d = 0; d < schema_.n_cat(); ++d) {
        cat_probs_row(d, base.data(), classes.data(), out.cat_probs.data() +
                                                          (t - 1) * schema_.onehot_width() + c0);
        c0 += static_cast<std::size_t>(schema_.covariates[d].classes);
      }
    }
    if (schema_.n_cont() > 0)
      cont_means_row(base.data(), classes.data(), out.cont_means.data() + (t - 1) * schema_.n_cont());
  }
  return out;
}

// ---------------------------------------------------------------------------

class LinearRollout : public RolloutSession {
public:
  LinearRollout(const LinearEstimator& m, std::size_t lanes)
      : m_(m), lanes_(lanes), w_(m.lag_width()),
        ring_(lanes * m.config().lag_window * m.lag_width(), 0.0) {}

  void prime(const Trajectory& prefix, std::size_t cov_len) override {
    const Schema& sc = m_.schema_;
    statics_ = prefix.statics;
    // Encode the last lag_window complete rows (cov+treat) of the prefix.
    std::size_t complete = cov_len - 1; // rows 0..cov_len-2 have treatments
    filled_ = 0;
    next_slot_ = 0;
    for (std::size_t t = complete >= m_.cfg_.lag_window ? complete - m_.cfg_.lag_window : 0;
         t < complete; ++t) {
      std::vector<double> row(w_);
      m_.encode_lag_row(prefix.cov.data() + t * sc.n_cov(), prefix.treat.data() + t * sc.n_treat(),
                        row.data());
      push_all_lanes(row.data());
    }
    last_cov_ = Tensor({lanes_, sc.n_cov()});
    for (std::size_t l = 0; l < lanes_; ++l)
      std::copy_n(prefix.cov.data() + (cov_len - 1) * sc.n_cov(), sc.n_cov(),
                  last_cov_.data() + l * sc.n_cov());
  }

  void begin_step(const Tensor& treat_rows) override {
    const Schema& sc = m_.schema_;
    for (std::size_t l = 0; l < lanes_; ++l) {
      std::vector<double> row(w_);
      m_.encode_lag_row(last_cov_.data() + l * sc.n_cov(), treat_rows.data() + l * sc.n_treat(),
                        row.data());
      std::copy_n(row.data(), w_, lane_slot(l, next_slot_));
    }
    next_slot_ = (next_slot_ + 1) % m_.cfg_.lag_window;
    filled_ = std::min(filled_ + 1, m_.cfg_.lag_window);
  }

  Tensor cat_probs(std::size_t d, const std::vector<int>& earlier) override {
    std::size_t C = static_cast<std::size_t>(m_.schema_.covariates[d].classes);
    Tensor out({lanes_, C});
    std::vector<double> base(m_.base_features());
    std::vector<int> lane_earlier(d);
    for (std::size_t l = 0; l < lanes_; ++l) {
      assemble_base(l, base.data());
      for (std::size_t e = 0; e < d; ++e) lane_earlier[e] = earlier[l * d + e];
      m_.cat_probs_row(d, base.data(), lane_earlier.data(), out.data() + l * C);
    }
    return out;
  }

  Tensor cont_means(const std::vector<int>& cat_block) override {
    std::size_t D = m_.schema_.n_cont(), nc = m_.schema_.n_cat();
    Tensor out({lanes_, D});
    std::vector<double> base(m_.base_features());
    std::vector<int> lane_cats(nc);
    for (std::size_t l = 0; l < lanes_; ++l) {
      assemble_base(l, base.data());
      for (std::size_t e = 0; e < nc; ++e) lane_cats[e] = cat_block[l * nc + e];
      m_.cont_means_row(base.data(), lane_cats.data(), out.data() + l * D);
    }
    return out;
  }

  void commit_covariates(const Tensor& cov_rows) override { last_cov_ = cov_rows; }
  std::size_t lanes() const override { return lanes_; }

private:
  double* lane_slot(std::size_t lane, std::size_t slot) {
    return ring_.data() + (lane * m_.cfg_.lag_window + slot) * w_;
  }
  const double* lane_slot(std::size_t lane, std::size_t slot) const {
    return ring_.data() + (lane * m_.cfg_.lag_window + slot) * w_;
  }
  void push_all_lanes(const double* row) {
    for (std::size_t l = 0; l < lanes_; ++l) std::copy_n(row, w_, lane_slot(l, next_slot_));
    next_slot_ = (next_slot_ + 1) % m_.cfg_.lag_window;
    filled_ = std::min(filled_ + 1, m_.cfg_.lag_window);
  }
  /// Base features: lag 1 is the most recently pushed row.
  void assemble_base(std::size_t lane, double* dst) const {
    std::fill_n(dst, m_.base_features(), 0.0);
    for (std::size_t lag = 1; lag <= filled_; ++lag) {
      std::size_t slot = (next_slot_ + m_.cfg_.lag_window - lag) % m_.cfg_.lag_window;
      std::copy_n(lane_slot(lane, slot), w_, dst + (lag - 1) * w_);
    }
    std::size_t pos = m_.cfg_.lag_window * w_;
    for (std::size_t j = 0; j < m_.schema_.n_static(); ++j)
      dst[pos++] = (statics_[j] - m_.stats_.static_mean[j]) / m_.stats_.static_std[j];
    dst[pos] = 1.0;
  }

  const LinearEstimator& m_;
  std::size_t lanes_, w_;
  std::vector<double> ring_;
  std::size_t filled_ = 0, next_slot_ = 0;
  std::vector<double> statics_;
  Tensor last_cov_;
};

namespace {
void write_tensor_raw(std::ofstream& os, const Tensor& t) {
  std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
  for (std::size_t d = 0; d < t.rank(); ++d) {
    std::uint64_t dim = t.dim(d);
    os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  }
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor_raw(std::ifstream& is) {
  std::uint32_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) {
    std::uint64_t dim = 0;
    is.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    d = static_cast<std::size_t>(dim);
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw DataError("linear checkpoint truncated");
  return t;
}
} // namespace

void LinearEstimator::serialize_weights(std::ofstream& os) const {
  std::uint64_t n = cat_weights_.size();
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& w : cat_weights_) write_tensor_raw(os, w);
  write_tensor_raw(os, cont_weights_);
  os.write(reinterpret_cast<const char*>(&ridge_used_), sizeof(ridge_used_));
}

void LinearEstimator::deserialize_weights(std::ifstream& is) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  cat_weights_.clear();
  for (std::uint64_t i = 0; i < n; ++i) cat_weights_.push_back(read_tensor_raw(is));
  cont_weights_ = read_tensor_raw(is);
  is.read(reinterpret_cast<char*>(&ridge_used_), sizeof(ridge_used_));
  if (!is) throw DataError("linear checkpoint truncated");
}

std::unique_ptr<RolloutSession> LinearEstimator::make_rollout(std::size_t n_draws) const {
  return std::make_unique<LinearRollout>(*this, n_draws);
}

std::unique_ptr<LinearEstimator> fit_linear_gcomp(std::span<const Trajectory> units, Schema schema,
                                                  NormStats stats, LinearConfig cfg) {
  auto est = std::make_unique<LinearEstimator>(std::move(schema), std::move(stats), cfg);
  est->fit(units);
  return est;
}

} // namespace gcsim
