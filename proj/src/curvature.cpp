#include "curvlab/curvature.hpp"

#include <algorithm>
#include <cmath>

#include "curvlab/error.hpp"
#include "curvlab/io.hpp"
#include "curvlab/linalg.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {

LossField loss_field(NetEval& eval, int y) {
  return {[&eval, y](const Tensor& x) { return eval.loss(x, y); },
          [&eval, y](const Tensor& x) { return eval.input_gradient(x, y); }};
}

Tensor hvp(const LossField& f, const Tensor& x, const Tensor& z, double h) {
  if (h <= 0) throw Error("hvp: step h must be positive, got " + format_double(h));
  if (!x.same_shape(z))
    throw ShapeError("hvp: direction shape " + shape_to_string(z.shape()) + " != point shape " +
                     shape_to_string(x.shape()));
  double nz = norm2(z);
  if (std::abs(nz - 1.0) > 1e-8)
    throw Error("hvp: direction must be unit norm, got |z| = " + format_double(nz));
  Tensor shifted = x;
  axpy(h, z, shifted);
  Tensor g1 = f.gradient(shifted);
  Tensor g0 = f.gradient(x);
  check_finite(g1, "hvp gradient at x+hz");
  check_finite(g0, "hvp gradient at x");
  Tensor out = g1 - g0;
  scale_inplace(out, 1.0 / h);
  return out;
}

Tensor hvp(NetEval& eval, const Tensor& x, int y, const Tensor& z, double h) {
  return hvp(loss_field(eval, y), x, z, h);
}

Tensor assemble_hessian(const LossField& f, const Tensor& x, double h) {
  int d = static_cast<int>(x.size());
  Tensor H({d, d});
  Tensor e({d});
  for (int j = 0; j < d; ++j) {
    e.fill(0.0);
    e[j] = 1.0;
    Tensor col = hvp(f, x, e, h);
    for (int i = 0; i < d; ++i) H.at(i, j) = col[i];
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      double m = 0.5 * (H.at(i, j) + H.at(j, i));
      H.at(i, j) = m;
      H.at(j, i) = m;
    }
  return H;
}

CurvatureProfile curvature_profile(const LossField& f, const Tensor& x, double h) {
  Tensor H = assemble_hessian(f, x, h);
  EigenDecomposition ed = jacobi_eigen(H);
  CurvatureProfile p;
  p.eigenvalues = std::move(ed.eigenvalues);
  p.h = h;
  return p;
}

CurvatureProfile curvature_profile(NetEval& eval, const Tensor& x, int y, double h) {
  return curvature_profile(loss_field(eval, y), x, h);
}

CurvatureProfile curvature_profile_lanczos(const LossField& f, const Tensor& x, double h, int k,
                                           std::uint64_t seed) {
  int d = static_cast<int>(x.size());
  // The FD-HVP operator is only approximately linear/symmetric; Lanczos
  // tolerances are relaxed accordingly.
  LanczosOptions opts;
  opts.seed = seed;
  opts.max_iter = std::min(d, std::max(10 * k + 30, 40));
  opts.tol = 1e-8;
  auto apply = [&](const Tensor& v) {
    double nv = norm2(v);
    Tensor unit = (1.0 / nv) * v;
    Tensor out = hvp(f, x, unit, h);
    scale_inplace(out, nv);
    return out;
  };
  CurvatureProfile p;
  p.eigenvalues = lanczos_extremes(apply, d, k, opts);
  p.h = h;
  p.estimator = "lanczos-" + std::to_string(k);
  return p;
}

double frobenius_estimate(const LossField& f, const Tensor& x, double h, int n_samples,
                          std::uint64_t seed) {
  if (n_samples < 1) throw Error("frobenius_estimate: need n_samples >= 1");
  Rng rng(seed);
  int d = static_cast<int>(x.size());
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    Tensor z = rng.normal_tensor({d});
    double nz = norm2(z);
    if (nz == 0.0) continue;  // probability-zero draw; contributes |H 0|^2 = 0
    Tensor unit = (1.0 / nz) * z;
    Tensor hz = hvp(f, x, unit, h);
    double n = nz * norm2(hz);  // |H z| by linearity of the HVP
    acc += n * n;
  }
  return std::sqrt(acc / n_samples);
}

double frobenius_estimate(NetEval& eval, const Tensor& x, int y, double h, int n_samples,
                          std::uint64_t seed) {
  return frobenius_estimate(loss_field(eval, y), x, h, n_samples, seed);
}

double alignment(const LossField& f, const Tensor& x, double h) {
  Tensor g = f.gradient(x);
  check_finite(g, "alignment gradient");
  double ng = norm2(g);
  if (ng == 0.0) throw Error("alignment: zero gradient, statistic undefined");
  int d = static_cast<int>(x.size());
  Tensor u;
  if (d <= 64) {
    Tensor H = assemble_hessian(f, x, h);
    EigenDecomposition ed = jacobi_eigen(H);
    u = ed.eigenvector(d - 1);
  } else {
    auto apply = [&](const Tensor& v) {
      double nv = norm2(v);
      Tensor unit = (1.0 / nv) * v;
      Tensor out = hvp(f, x, unit, h);
      scale_inplace(out, nv);
      return out;
    };
    LanczosOptions opts;
    opts.tol = 1e-8;
    u = lanczos_extremal(apply, d, /*want_max=*/true, opts).vector;
  }
  double a = std::abs(dot(g, u)) / ng;
  return std::min(a, 1.0);
}

double alignment(NetEval& eval, const Tensor& x, int y, double h) {
  return alignment(loss_field(eval, y), x, h);
}

CurvatureProfile mean_profile(std::vector<CurvatureProfile> profiles) {
  if (profiles.empty()) throw Error("mean_profile: no profiles");
  std::stable_sort(profiles.begin(), profiles.end(),
                   [](const CurvatureProfile& a, const CurvatureProfile& b) {
                     return a.sample_id < b.sample_id;
                   });
  std::size_t d = profiles.front().eigenvalues.size();
  for (const auto& p : profiles)
    if (p.eigenvalues.size() != d)
      throw ShapeError("mean_profile: profiles have mixed lengths");
  CurvatureProfile out;
  out.eigenvalues.assign(d, 0.0);
  out.h = profiles.front().h;
  out.estimator = profiles.front().estimator;
  for (const auto& p : profiles)
    for (std::size_t i = 0; i < d; ++i) out.eigenvalues[i] += p.eigenvalues[i];
  for (std::size_t i = 0; i < d; ++i) out.eigenvalues[i] /= static_cast<double>(profiles.size());
  return out;
}

CurvatureProfile average_profile(NetEval& eval, const Dataset& data, int n_points, double h,
                                 std::uint64_t seed) {
  if (data.size() == 0) throw Error("average_profile: empty dataset");
  std::vector<int> idx = sample_indices(data.size(), n_points, seed);
  std::vector<CurvatureProfile> profiles;
  profiles.reserve(idx.size());
  for (int i : idx) {
    CurvatureProfile p = curvature_profile(eval, data.inputs[static_cast<std::size_t>(i)],
                                           data.labels[static_cast<std::size_t>(i)], h);
    p.sample_id = i;
    profiles.push_back(std::move(p));
  }
  return mean_profile(std::move(profiles));
}

std::string profile_to_csv(const CurvatureProfile& profile, int sample_count, std::uint64_t seed) {
  CsvBuilder csv;
  csv.comment("h", profile.h);
  csv.comment("samples", static_cast<std::int64_t>(sample_count));
  csv.comment("estimator", profile.estimator);
  csv.comment("seed", std::to_string(seed));
  csv.row("rank", "eigenvalue");
  for (std::size_t i = 0; i < profile.eigenvalues.size(); ++i)
    csv.row(static_cast<std::int64_t>(i), profile.eigenvalues[i]);
  return csv.str();
}

}  // namespace curvlab
