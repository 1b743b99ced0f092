#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "curvlab/data.hpp"
#include "curvlab/network.hpp"
#include "curvlab/tensor.hpp"

namespace curvlab {

/// A differentiable scalar field over inputs: the network loss at a fixed
/// label, or an analytic field in tests. Curvature operations only see
/// this pair, so they apply unchanged to both.
struct LossField {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> gradient;
};

/// The network loss at class y as a field over x. Captures the evaluator
/// by reference; keep `eval` alive while the field is in use.
LossField loss_field(NetEval& eval, int y);

/// Finite-difference Hessian-vector product at scale h:
/// (grad(x + h z) - grad(x)) / h, with z required to be unit-norm.
Tensor hvp(const LossField& f, const Tensor& x, const Tensor& z, double h);
Tensor hvp(NetEval& eval, const Tensor& x, int y, const Tensor& z, double h);

/// Dense input Hessian assembled column-by-column from basis HVPs and
/// symmetrized as (H + H^T)/2.
Tensor assemble_hessian(const LossField& f, const Tensor& x, double h);

struct CurvatureProfile {
  std::vector<double> eigenvalues;  // ascending, signed
  double h = 0.0;
  int sample_id = -1;               // -1 for aggregates
  std::string estimator = "full";   // "full" or "lanczos-<k>"
};

CurvatureProfile curvature_profile(const LossField& f, const Tensor& x, double h);
CurvatureProfile curvature_profile(NetEval& eval, const Tensor& x, int y, double h);

/// Extremal-only profile: bottom-k and top-k eigenvalues via Lanczos on
/// the finite-difference HVP operator.
CurvatureProfile curvature_profile_lanczos(const LossField& f, const Tensor& x, double h, int k,
                                           std::uint64_t seed);

/// Stochastic Frobenius-norm estimate: sqrt of the mean of |H z|^2 over
/// standard-normal z. Unit-norm HVPs are extended to raw z by linearity.
double frobenius_estimate(const LossField& f, const Tensor& x, double h, int n_samples,
                          std::uint64_t seed);
double frobenius_estimate(NetEval& eval, const Tensor& x, int y, double h, int n_samples,
                          std::uint64_t seed);

/// |grad . u| / |grad| where u is the unit eigenvector of the largest
/// eigenvalue. Errors on zero gradient.
double alignment(const LossField& f, const Tensor& x, double h);
double alignment(NetEval& eval, const Tensor& x, int y, double h);

/// Rank-wise mean of profiles; input order does not affect the result
/// (summation is done in sample-id order).
CurvatureProfile mean_profile(std::vector<CurvatureProfile> profiles);

/// Mean profile over n_points samples drawn from the dataset by seed.
CurvatureProfile average_profile(NetEval& eval, const Dataset& data, int n_points, double h,
                                 std::uint64_t seed);

std::string profile_to_csv(const CurvatureProfile& profile, int sample_count, std::uint64_t seed);

}  // namespace curvlab
