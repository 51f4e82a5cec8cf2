#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace attnlab {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Every multi-dimensional quantity in the
// library (weights, gradients, phase grids) is one of these; there is no
// expression-template machinery, just storage plus the handful of kernels
// below.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, Vec data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> flat() const { return data_; }
  std::span<double> flat() { return data_; }

  bool all_finite() const;
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double nrm2(std::span<const double> a);
void scal(double a, std::span<double> x);                            // x *= a
void axpy(double a, std::span<const double> x, std::span<double> y); // y += a*x

Vec matvec(const Matrix& a, std::span<const double> x);    // A x
Vec matvec_t(const Matrix& a, std::span<const double> x);  // A^T x
Matrix matmul(const Matrix& a, const Matrix& b);
void add_outer(Matrix& a, double s, std::span<const double> u,
               std::span<const double> v);  // A += s * u v^T

Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);

// Largest |a - b| entry; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace attnlab
