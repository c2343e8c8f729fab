#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace gcsim {

/// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything
/// in this codebase; batched sequences are stored as (batch*time) x features.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 convenience. rows()/cols() treat rank-1 as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);
  std::string shape_str() const;

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Out-of-graph kernels shared by the tape and inference paths.
// c = a*b for row-major matrices; c must be preallocated (m x n).
void matmul_raw(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);
// c = a * b^T, b given as (n x k).
void matmul_nt_raw(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
// c += a^T * b, a is (m x k), b is (m x n), c is (k x n).
void matmul_tn_acc_raw(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);

Tensor matmul(const Tensor& a, const Tensor& b);

// In-place row softmax with max-subtraction; each row sums to 1.
void softmax_rows_inplace(Tensor& t);

} // namespace gcsim
