#include "curvlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "curvlab/error.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {

Tensor matvec(const Tensor& A, const Tensor& v) {
  if (A.shape().size() != 2 || v.shape().size() != 1 || A.cols() != v.size())
    throw ShapeError("matvec: incompatible shapes " + shape_to_string(A.shape()) + " and " +
                     shape_to_string(v.shape()));
  Tensor out({A.rows()});
  for (int i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols(); ++j) s += A.at(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

Tensor EigenDecomposition::eigenvector(int j) const {
  int d = eigenvectors.rows();
  Tensor v({d});
  for (int i = 0; i < d; ++i) v[i] = eigenvectors.at(i, j);
  return v;
}

namespace {

double off_diagonal_norm(const Tensor& A) {
  double s = 0.0;
  int d = A.rows();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) s += A.at(i, j) * A.at(i, j);
  return std::sqrt(s);
}

}  // namespace

EigenDecomposition jacobi_eigen(const Tensor& A_in, double tol, int max_sweeps) {
  if (A_in.shape().size() != 2 || A_in.rows() != A_in.cols())
    throw ShapeError("jacobi: matrix must be square, got " + shape_to_string(A_in.shape()));
  int d = A_in.rows();
  double scale = norm2(A_in);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(A_in.at(i, j) - A_in.at(j, i)) > 1e-8 * std::max(1.0, scale))
        throw Error("jacobi: matrix is not symmetric at (" + std::to_string(i) + "," +
                    std::to_string(j) + ")");

  Tensor A = A_in;
  Tensor V({d, d});
  for (int i = 0; i < d; ++i) V.at(i, i) = 1.0;
  double target = tol * std::max(scale, 1e-300);

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (off_diagonal_norm(A) <= target) break;
    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        double apq = A.at(p, q);
        if (apq == 0.0) continue;
        double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        // A <- J^T A J with the (p,q) rotation, keeping symmetry explicit.
        for (int k = 0; k < d; ++k) {
          double akp = A.at(k, p), akq = A.at(k, q);
          A.at(k, p) = c * akp - s * akq;
          A.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          double apk = A.at(p, k), aqk = A.at(q, k);
          A.at(p, k) = c * apk - s * aqk;
          A.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          double vkp = V.at(k, p), vkq = V.at(k, q);
          V.at(k, p) = c * vkp - s * vkq;
          V.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_diagonal_norm(A) > target)
    throw ConvergenceError("jacobi: off-diagonal norm still " +
                               std::to_string(off_diagonal_norm(A)) + " after " +
                               std::to_string(sweep) + " sweeps",
                           sweep);

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return A.at(a, a) < A.at(b, b); });

  EigenDecomposition out;
  out.sweeps = sweep;
  out.eigenvalues.resize(d);
  out.eigenvectors = Tensor({d, d});
  for (int j = 0; j < d; ++j) {
    out.eigenvalues[j] = A.at(order[j], order[j]);
    int src = order[j];
    int peak = 0;
    for (int i = 1; i < d; ++i)
      if (std::abs(V.at(i, src)) > std::abs(V.at(peak, src))) peak = i;
    double flip = V.at(peak, src) < 0 ? -1.0 : 1.0;
    for (int i = 0; i < d; ++i) out.eigenvectors.at(i, j) = flip * V.at(i, src);
  }
  return out;
}

LanczosEigenPair lanczos_extremal(const std::function<Tensor(const Tensor&)>& apply, int dim,
                                  bool want_max, const LanczosOptions& opts) {
  if (dim <= 0) throw ShapeError("lanczos: dimension must be positive");
  Rng rng(opts.seed);
  Tensor v = rng.normal_tensor({dim});
  double nv = norm2(v);
  if (nv == 0.0) throw Error("lanczos: degenerate start vector");
  scale_inplace(v, 1.0 / nv);

  std::vector<Tensor> basis;  // orthonormal Lanczos vectors
  std::vector<double> alpha, beta;
  basis.push_back(v);

  int max_iter = std::min(opts.max_iter, dim);
  double ritz = 0.0;
  Tensor ritz_small;
  int k = 0;
  for (k = 1; k <= max_iter; ++k) {
    Tensor w = apply(basis.back());
    check_finite(w, "lanczos operator output");
    double a = dot(w, basis.back());
    alpha.push_back(a);
    // Full reorthogonalization keeps the basis usable at high accuracy.
    for (int pass = 0; pass < 2; ++pass)
      for (const Tensor& u : basis) axpy(-dot(w, u), u, w);
    double b = norm2(w);

    // Ritz extraction from the small tridiagonal system.
    int m = static_cast<int>(alpha.size());
    Tensor T({m, m});
    for (int i = 0; i < m; ++i) {
      T.at(i, i) = alpha[i];
      if (i + 1 < m) {
        T.at(i, i + 1) = beta[i];
        T.at(i + 1, i) = beta[i];
      }
    }
    EigenDecomposition ed = jacobi_eigen(T, 1e-14, 200);
    int pick = want_max ? m - 1 : 0;
    ritz = ed.eigenvalues[pick];
    ritz_small = ed.eigenvector(pick);
    double residual = b * std::abs(ritz_small[m - 1]);
    if (residual <= opts.tol * std::max(1.0, std::abs(ritz)) || b <= 1e-14 || k == dim) break;

    beta.push_back(b);
    scale_inplace(w, 1.0 / b);
    basis.push_back(std::move(w));
  }
  if (k > max_iter)
    throw ConvergenceError("lanczos: no convergence after " + std::to_string(max_iter) +
                               " iterations",
                           max_iter);

  Tensor vec({dim});
  for (std::size_t i = 0; i < basis.size(); ++i) axpy(ritz_small[static_cast<int>(i)], basis[i], vec);
  double n = norm2(vec);
  if (n > 0) scale_inplace(vec, 1.0 / n);
  int peak = 0;
  for (int i = 1; i < dim; ++i)
    if (std::abs(vec[i]) > std::abs(vec[peak])) peak = i;
  if (vec[peak] < 0) scale_inplace(vec, -1.0);
  return {ritz, std::move(vec), k};
}

std::vector<double> lanczos_extremes(const std::function<Tensor(const Tensor&)>& apply, int dim,
                                     int k, const LanczosOptions& opts) {
  if (dim <= 0) throw ShapeError("lanczos: dimension must be positive");
  if (k <= 0 || 2 * k > dim) throw ShapeError("lanczos: need 0 < 2k <= dim");
  Rng rng(opts.seed);
  Tensor v = rng.normal_tensor({dim});
  scale_inplace(v, 1.0 / norm2(v));

  std::vector<Tensor> basis{v};
  std::vector<double> alpha, beta;
  int max_iter = std::min(std::max(opts.max_iter, 2 * k + 2), dim);
  std::vector<double> ritz;
  for (int it = 1; it <= max_iter; ++it) {
    Tensor w = apply(basis.back());
    check_finite(w, "lanczos operator output");
    alpha.push_back(dot(w, basis.back()));
    for (int pass = 0; pass < 2; ++pass)
      for (const Tensor& u : basis) axpy(-dot(w, u), u, w);
    double b = norm2(w);

    int m = static_cast<int>(alpha.size());
    if (m >= 2 * k || it == max_iter || b <= 1e-14) {
      Tensor T({m, m});
      for (int i = 0; i < m; ++i) {
        T.at(i, i) = alpha[i];
        if (i + 1 < m) {
          T.at(i, i + 1) = beta[i];
          T.at(i + 1, i) = beta[i];
        }
      }
      EigenDecomposition ed = jacobi_eigen(T, 1e-14, 200);
      // Residual bound b*|last component| per wanted Ritz pair.
      double worst = 0.0;
      double span = std::max(std::abs(ed.eigenvalues.front()), std::abs(ed.eigenvalues.back()));
      for (int j = 0; j < m; ++j) {
        if (j >= k && j < m - k) continue;
        worst = std::max(worst, b * std::abs(ed.eigenvectors.at(m - 1, j)));
      }
      if (m >= 2 * k && (worst <= opts.tol * std::max(1.0, span) || b <= 1e-14 || it == dim ||
                         it == max_iter)) {
        ritz.clear();
        for (int j = 0; j < k; ++j) ritz.push_back(ed.eigenvalues[static_cast<std::size_t>(j)]);
        for (int j = m - k; j < m; ++j) ritz.push_back(ed.eigenvalues[static_cast<std::size_t>(j)]);
        return ritz;
      }
      if (b <= 1e-14 && m < 2 * k)
        throw ConvergenceError("lanczos: Krylov space collapsed after " + std::to_string(m) +
                                   " steps, fewer than 2k Ritz values available",
                               m);
    }

    beta.push_back(b);
    scale_inplace(w, 1.0 / b);
    basis.push_back(std::move(w));
  }
  throw ConvergenceError("lanczos: extremes did not converge within " + std::to_string(max_iter) +
                             " iterations",
                         max_iter);
}

}  // namespace curvlab
