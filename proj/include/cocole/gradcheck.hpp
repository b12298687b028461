#pragma once

#include <functional>
#include <span>

#include "cocole/tensor.hpp"

namespace cocole {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference estimate (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate of x. The returned tensor has x's shape and no gradient.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h);

// ||a - b|| / max(||a||, ||b||), with 0 when both are zero. Used as the
// relative error between an analytic gradient and its finite-difference
// estimate.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace cocole
