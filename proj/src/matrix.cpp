#include "attnlab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace attnlab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("matrix: ") + what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "data size does not match shape");
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double nrm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void scal(double a, std::span<double> x) {
  for (double& v : x) v *= a;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matvec shape mismatch");
  Vec y(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
  return y;
}

Vec matvec_t(const Matrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), "matvec_t shape mismatch");
  Vec y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) axpy(x[r], a.row(r), y);
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      axpy(aik, b.row(k), c.row(i));
    }
  return c;
}

void add_outer(Matrix& a, double s, std::span<const double> u, std::span<const double> v) {
  require(a.rows() == u.size() && a.cols() == v.size(), "add_outer shape mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) axpy(s * u[r], v, a.row(r));
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "operator- shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.flat()[i] -= b.flat()[i];
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "operator+ shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.flat()[i] += b.flat()[i];
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

}  // namespace attnlab
