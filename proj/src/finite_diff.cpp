#include "attnlab/finite_diff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace attnlab {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_fn,
                        const Matrix& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
  Matrix grad(params.rows(), params.cols());
  Matrix probe = params;
  for (std::size_t r = 0; r < params.rows(); ++r) {
    for (std::size_t c = 0; c < params.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + step;
      const double hi = loss_fn(probe);
      probe(r, c) = orig - step;
      const double lo = loss_fn(probe);
      probe(r, c) = orig;
      if (!std::isfinite(hi) || !std::isfinite(lo))
        throw std::runtime_error("finite_diff_grad: non-finite loss at entry (" +
                                 std::to_string(r) + ", " + std::to_string(c) + ")");
      grad(r, c) = (hi - lo) / (2.0 * step);
    }
  }
  return grad;
}

}  // namespace attnlab
