#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "curvlab/tensor.hpp"

namespace curvlab {

/// Dense matrix-vector product, A {m,n} times v {n}.
Tensor matvec(const Tensor& A, const Tensor& v);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // ascending
  Tensor eigenvectors;              // {d,d}; column j pairs with eigenvalues[j]
  int sweeps = 0;

  Tensor eigenvector(int j) const;
};

/// Cyclic Jacobi rotations on a symmetric matrix. Converges when the
/// off-diagonal Frobenius norm drops below tol relative to the matrix
/// norm; throws ConvergenceError after max_sweeps. Eigenvector signs are
/// fixed so the largest-magnitude component is positive.
EigenDecomposition jacobi_eigen(const Tensor& A, double tol = 1e-10, int max_sweeps = 100);

struct LanczosOptions {
  int max_iter = 200;
  double tol = 1e-10;
  std::uint64_t seed = 7;
};

struct LanczosEigenPair {
  double value = 0.0;
  Tensor vector;
  int iterations = 0;
};

/// Extremal (largest or smallest algebraic) eigenpair of an implicit
/// symmetric operator, by Lanczos iteration with full reorthogonalization.
/// `matvec` must be linear and symmetric; this is not checked.
LanczosEigenPair lanczos_extremal(const std::function<Tensor(const Tensor&)>& apply, int dim,
                                  bool want_max, const LanczosOptions& opts = {});

/// Bottom-k and top-k Ritz values (ascending, concatenated bottom then top)
/// from one Lanczos run with full reorthogonalization. Iterates until the
/// wanted Ritz pairs converge or the Krylov space is exhausted.
std::vector<double> lanczos_extremes(const std::function<Tensor(const Tensor&)>& apply, int dim,
                                     int k, const LanczosOptions& opts = {});

}  // namespace curvlab
