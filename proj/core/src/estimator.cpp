#include "gcsim/estimator.hpp"

#include "gcsim/errors.hpp"

#include <cmath>

namespace gcsim {

std::size_t feature_width(const Schema& schema) {
  return schema.onehot_width() + schema.n_cont() + schema.n_treat() + schema.n_static();
}

void encode_onehot(const Schema& schema, const double* cov_or_classes, double* dst) {
  std::size_t pos = 0;
  for (std::size_t d = 0; d < schema.n_cat(); ++d) {
    int classes = schema.covariates[d].classes;
    int v = static_cast<int>(std::lround(cov_or_classes[d]));
    if (v < 0 || v >= classes)
      throw DataError("categorical value " + std::to_string(v) + " out of range for '" +
                      schema.covariates[d].name + "'");
    for (int c = 0; c < classes; ++c) dst[pos + c] = (c == v) ? 1.0 : 0.0;
    pos += static_cast<std::size_t>(classes);
  }
}

void encode_features(const Schema& schema, const NormStats& stats, const double* cov,
                     const double* treat, const double* statics, double* dst) {
  encode_onehot(schema, cov, dst);
  std::size_t pos = schema.onehot_width();
  for (std::size_t j = schema.cont_offset(); j < schema.n_cov(); ++j)
    dst[pos++] = stats.z_cov(j, cov[j]);
  for (std::size_t j = 0; j < schema.n_treat(); ++j)
    dst[pos++] = stats.z_treat(j, treat ? treat[j] : 0.0);
  for (std::size_t j = 0; j < schema.n_static(); ++j) {
    double v = statics ? statics[j] : 0.0;
    dst[pos++] = (v - stats.static_mean[j]) / stats.static_std[j];
  }
}

} // namespace gcsim
