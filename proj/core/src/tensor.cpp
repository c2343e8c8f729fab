#include "gcsim/tensor.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace gcsim {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// BLAS kept single-threaded: parallelism happens across trajectories and
// draws with deterministic reduction order, never inside a kernel.
void pin_blas_threads() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}
} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_product(shape_))
    throw std::invalid_argument("Tensor: value count does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i)
    os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
  os << ")";
  return os.str();
}

void matmul_raw(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
              1.0, a, static_cast<int>(k), b, static_cast<int>(n),
              0.0, c, static_cast<int>(n));
}

void matmul_nt_raw(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
              1.0, a, static_cast<int>(k), b, static_cast<int>(k),
              0.0, c, static_cast<int>(n));
}

void matmul_tn_acc_raw(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans,
              static_cast<int>(k), static_cast<int>(n), static_cast<int>(m),
              1.0, a, static_cast<int>(k), b, static_cast<int>(n),
              1.0, c, static_cast<int>(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " x " + b.shape_str());
  Tensor c({a.dim(0), b.dim(1)});
  matmul_raw(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

void softmax_rows_inplace(Tensor& t) {
  std::size_t rows = t.rows(), cols = t.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = t.data() + r * cols;
    double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    double inv = 1.0 / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

} // namespace gcsim
