#pragma once

#include <functional>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Central-difference gradient of loss_fn at params, one entry at a time:
// g_ij = (f(params + h e_ij) - f(params - h e_ij)) / (2h). O(h^2) accurate for
// smooth f. Throws if any probed loss value is non-finite, naming the entry.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_fn,
                        const Matrix& params, double step = 1e-5);

}  // namespace attnlab
