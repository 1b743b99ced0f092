#pragma once

#include <functional>

#include "curvlab/tensor.hpp"

namespace curvlab {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient estimate of a scalar function, step > 0.
/// Serves as the independent oracle for reverse-mode gradients.
Tensor finite_diff_gradient(const ScalarFn& f, const Tensor& x, double step);

/// Dense Hessian estimate from values only (second-order central stencil).
/// O(d^2) function evaluations; intended for small d.
Tensor finite_diff_hessian(const ScalarFn& f, const Tensor& x, double step);

using GradientFn = std::function<Tensor(const Tensor&)>;

/// Dense Hessian estimate by central differences of a gradient function,
/// column j = (g(x + step e_j) - g(x - step e_j)) / (2 step).
Tensor finite_diff_hessian_of_gradient(const GradientFn& g, const Tensor& x, double step);

}  // namespace curvlab
