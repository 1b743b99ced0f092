#include "curvlab/numdiff.hpp"

namespace curvlab {

Tensor finite_diff_gradient(const ScalarFn& f, const Tensor& x, double step) {
  if (step <= 0.0) throw Error("finite_diff_gradient: step must be positive");
  Tensor g = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

Tensor finite_diff_hessian(const ScalarFn& f, const Tensor& x, double step) {
  if (step <= 0.0) throw Error("finite_diff_hessian: step must be positive");
  const int d = static_cast<int>(x.size());
  Tensor h({d, d});
  Tensor probe = x;
  const double f0 = f(x);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      double v;
      if (i == j) {
        probe[i] = x[i] + step;
        const double fp = f(probe);
        probe[i] = x[i] - step;
        const double fm = f(probe);
        probe[i] = x[i];
        v = (fp - 2.0 * f0 + fm) / (step * step);
      } else {
        probe[i] = x[i] + step;
        probe[j] = x[j] + step;
        const double fpp = f(probe);
        probe[j] = x[j] - step;
        const double fpm = f(probe);
        probe[i] = x[i] - step;
        const double fmm = f(probe);
        probe[j] = x[j] + step;
        const double fmp = f(probe);
        probe[i] = x[i];
        probe[j] = x[j];
        v = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
      }
      h.at(i, j) = v;
      h.at(j, i) = v;
    }
  }
  return h;
}

Tensor finite_diff_hessian_of_gradient(const GradientFn& g, const Tensor& x, double step) {
  if (step <= 0.0) throw Error("finite_diff_hessian_of_gradient: step must be positive");
  const int d = static_cast<int>(x.size());
  Tensor h({d, d});
  Tensor probe = x;
  for (int j = 0; j < d; ++j) {
    probe[j] = x[j] + step;
    const Tensor gp = g(probe);
    probe[j] = x[j] - step;
    const Tensor gm = g(probe);
    probe[j] = x[j];
    for (int i = 0; i < d; ++i) h.at(i, j) = (gp[i] - gm[i]) / (2.0 * step);
  }
  return h;
}

}  // namespace curvlab
