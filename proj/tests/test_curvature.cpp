#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "curvlab/curvature.hpp"
#include "curvlab/data.hpp"
#include "curvlab/error.hpp"
#include "curvlab/linalg.hpp"
#include "curvlab/network.hpp"
#include "curvlab/numdiff.hpp"
#include "curvlab/rng.hpp"

using namespace curvlab;

namespace {

// l(x) = x.(Ax)/2: gradient Ax, constant hessian A.
LossField quadratic_field(const Tensor& A) {
  return {
      [A](const Tensor& x) { return 0.5 * dot(x, matvec(A, x)); },
      [A](const Tensor& x) { return matvec(A, x); },
  };
}

LossField linear_field(const Tensor& w) {
  return {
      [w](const Tensor& x) { return dot(w, x); },
      [w](const Tensor& x) {
        (void)x;
        return w;
      },
  };
}

double dot_raw(const Tensor& a, const Tensor& b) { return dot(a, b); }

}  // namespace

TEST_SUITE("curvature") {

TEST_CASE("hvp is exact on quadratics for every h") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  LossField f = quadratic_field(A);
  Tensor x({2}, {0.3, -0.9});
  Tensor z({2}, {1, 0});
  for (double h : {1e-3, 0.1, 1.0, 7.0}) {
    Tensor Hz = hvp(f, x, z, h);
    CHECK(std::fabs(Hz[0] - 2.0) < 1e-10);
    CHECK(std::fabs(Hz[1] - 1.0) < 1e-10);
  }
}

TEST_CASE("hvp preconditions: unit direction, positive h") {
  Tensor A({2, 2}, {1, 0, 0, 1});
  LossField f = quadratic_field(A);
  Tensor x({2}, {0, 0});
  CHECK_THROWS_AS(hvp(f, x, Tensor({2}, {0, 0}), 0.1), Error);
  CHECK_THROWS_AS(hvp(f, x, Tensor({2}, {1, 1}), 0.1), Error);  // norm sqrt(2)
  CHECK_THROWS_AS(hvp(f, x, Tensor({2}, {1, 0}), 0.0), Error);
  CHECK_NOTHROW(hvp(f, x, Tensor({2}, {1, 0}), 0.1));
}

TEST_CASE("hvp matches the brute-force hessian on a small net") {
  Network n = build_network({AffineLayer{8, 16}, ReluLayer{}, AffineLayer{16, 3}}, 61);
  NetEval eval(n);
  Rng rng(67);
  Tensor x = rng.uniform_tensor({8}, -1, 1);
  int y = 1;
  Tensor H = finite_diff_hessian_of_gradient(
      [&](const Tensor& v) { return eval.input_gradient(v, y); }, x, 1e-4);
  // symmetrize the oracle the same way
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < i; ++j) {
      double m = 0.5 * (H.at(i, j) + H.at(j, i));
      H.at(i, j) = H.at(j, i) = m;
    }
  Rng zrng(5);
  for (int rep = 0; rep < 4; ++rep) {
    Tensor z = zrng.normal_tensor({8});
    scale_inplace(z, 1.0 / norm2(z));
    Tensor fd = hvp(eval, x, y, z, 1e-3);
    Tensor exact = matvec(H, z);
    double scale = std::max(1.0, norm2(exact));
    CHECK(norm2(fd - exact) / scale < 1e-3);
  }
}

TEST_CASE("profile of the 2x2 quadratic") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  LossField f = quadratic_field(A);
  CurvatureProfile p = curvature_profile(f, Tensor({2}, {0.4, 0.2}), 0.5);
  REQUIRE(p.eigenvalues.size() == 2);
  CHECK(p.eigenvalues[0] == doctest::Approx((5 - std::sqrt(5.0)) / 2).epsilon(1e-9));
  CHECK(p.eigenvalues[1] == doctest::Approx((5 + std::sqrt(5.0)) / 2).epsilon(1e-9));
  CHECK(p.estimator == "full");
}

TEST_CASE("linear loss has a flat-zero profile") {
  LossField f = linear_field(Tensor({3}, {1, -2, 0.5}));
  CurvatureProfile p = curvature_profile(f, Tensor({3}, {0.1, 0.2, 0.3}), 0.01);
  for (double ev : p.eigenvalues) CHECK(std::fabs(ev) < 1e-6);
}

TEST_CASE("profile length equals the input dimension") {
  Network n = build_network(named_layers("mlp-2d", 2, 2), 3);
  NetEval eval(n);
  CurvatureProfile p = curvature_profile(eval, Tensor({2}, {0.5, -0.5}), 0, 0.05);
  CHECK(p.eigenvalues.size() == 2);
}

TEST_CASE("lanczos extremes match the full profile on a 64-dim quadratic") {
  Rng rng(71);
  const int d = 64;
  Tensor A({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = rng.normal();
      A.at(i, j) = A.at(j, i) = v;
    }
  LossField f = quadratic_field(A);
  Tensor x = rng.normal_tensor({d});
  CurvatureProfile full = curvature_profile(f, x, 0.1);
  CurvatureProfile ext = curvature_profile_lanczos(f, x, 0.1, 3, 7);
  REQUIRE(ext.eigenvalues.size() == 6);
  CHECK(ext.estimator == "lanczos-3");
  for (int i = 0; i < 3; ++i) {
    double want_low = full.eigenvalues[static_cast<std::size_t>(i)];
    double want_high = full.eigenvalues[static_cast<std::size_t>(d - 3 + i)];
    CHECK(std::fabs(ext.eigenvalues[static_cast<std::size_t>(i)] - want_low) <
          1e-4 * std::max(1.0, std::fabs(want_low)));
    CHECK(std::fabs(ext.eigenvalues[static_cast<std::size_t>(3 + i)] - want_high) <
          1e-4 * std::max(1.0, std::fabs(want_high)));
  }
}

TEST_CASE("frobenius estimate: identity hessian concentrates at sqrt(d)") {
  const int d = 10;
  Tensor I({d, d});
  I.fill(0);
  for (int i = 0; i < d; ++i) I.at(i, i) = 1;
  LossField f = quadratic_field(I);
  double est = frobenius_estimate(f, Tensor({d}), 0.1, 1000, 99);
  CHECK(est * est == doctest::Approx(d).epsilon(0.15));
}

TEST_CASE("frobenius estimate: 2x2 example with |H|_F^2 = 15") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  LossField f = quadratic_field(A);
  double est = frobenius_estimate(f, Tensor({2}, {0.2, 0.1}), 0.5, 1000, 7);
  CHECK(est * est == doctest::Approx(15.0).epsilon(0.2));
}

TEST_CASE("frobenius estimate: linear model is flat") {
  LossField f = linear_field(Tensor({4}, {1, 2, 3, 4}));
  double est = frobenius_estimate(f, Tensor({4}), 0.01, 50, 3);
  CHECK(est < 1e-8);
}

TEST_CASE("frobenius estimator is unbiased over seeds") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  LossField f = quadratic_field(A);
  Tensor x({2}, {1, -1});
  double grand = 0;
  const int seeds = 50, per_seed = 40;
  for (int s = 0; s < seeds; ++s) {
    double est = frobenius_estimate(f, x, 0.3, per_seed, 1000 + static_cast<std::uint64_t>(s));
    grand += est * est;
  }
  grand /= seeds;
  CHECK(grand == doctest::Approx(15.0).epsilon(0.05));
}

TEST_CASE("alignment at the top and bottom eigenvectors of a quadratic") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  auto eig = jacobi_eigen(A);
  LossField f = quadratic_field(A);
  // at x = top eigenvector the gradient is nu x, collinear with u
  Tensor top = eig.eigenvector(1);
  CHECK(alignment(f, top, 1e-4) == doctest::Approx(1.0).epsilon(1e-8));
  Tensor bottom = eig.eigenvector(0);
  CHECK(alignment(f, bottom, 1e-4) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("alignment stays in [0,1] and rejects zero gradients") {
  Network n = build_network(named_layers("mlp-2d", 2, 2), 83);
  NetEval eval(n);
  Rng rng(89);
  for (int i = 0; i < 10; ++i) {
    double a = alignment(eval, rng.normal_tensor({2}), rng.uniform_int(2), 0.01);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
  Tensor A({2, 2}, {1, 0, 0, 2});
  LossField f = quadratic_field(A);
  CHECK_THROWS_AS(alignment(f, Tensor({2}, {0, 0}), 0.01), Error);  // gradient = 0 at origin
}

TEST_CASE("random unit vectors in d=3072 have overlap about 1/sqrt(d)") {
  const int d = 3072;
  Rng rng(97);
  double sq = 0, mean_abs = 0;
  const int pairs = 200;
  for (int i = 0; i < pairs; ++i) {
    Tensor a = rng.normal_tensor({d});
    Tensor b = rng.normal_tensor({d});
    scale_inplace(a, 1.0 / norm2(a));
    scale_inplace(b, 1.0 / norm2(b));
    double ip = dot_raw(a, b);
    sq += ip * ip;
    mean_abs += std::fabs(ip);
  }
  double rms = std::sqrt(sq / pairs);
  mean_abs /= pairs;
  // rms overlap is exactly 1/sqrt(d) ~ 0.018, "approximately 0.02"
  CHECK(rms == doctest::Approx(1.0 / std::sqrt(static_cast<double>(d))).epsilon(0.25));
  CHECK(mean_abs > 0.005);
  CHECK(mean_abs < 0.03);
}

TEST_CASE("mean profile: single sample, permutation invariance") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  LossField f = quadratic_field(A);
  CurvatureProfile p1 = curvature_profile(f, Tensor({2}, {1, 0}), 0.1);
  p1.sample_id = 0;
  CurvatureProfile single = mean_profile({p1});
  CHECK(single.eigenvalues == p1.eigenvalues);

  Tensor B({2, 2}, {1, 0, 0, -1});
  CurvatureProfile p2 = curvature_profile(quadratic_field(B), Tensor({2}, {1, 0}), 0.1);
  p2.sample_id = 1;
  CurvatureProfile ab = mean_profile({p1, p2});
  CurvatureProfile ba = mean_profile({p2, p1});
  REQUIRE(ab.eigenvalues.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK(ab.eigenvalues[i] == ba.eigenvalues[i]);  // bitwise
  CHECK(ab.eigenvalues[1] ==
        doctest::Approx(0.5 * (p1.eigenvalues[1] + p2.eigenvalues[1])).epsilon(1e-14));
}

TEST_CASE("average profile of a linear-ish model is flat") {
  // zero hidden weights: logits constant, gradient zero -> hessian zero
  Network n = build_network(named_layers("mlp-2d", 2, 2), 5);
  n.param("L4.W").fill(0);
  n.param("L4.b").fill(0);
  NetEval eval(n);
  Dataset data = gen_two_moons(20, 0.1, 3);
  CurvatureProfile p = average_profile(eval, data, 5, 0.05, 11);
  for (double ev : p.eigenvalues) CHECK(std::fabs(ev) < 1e-9);
}

TEST_CASE("profile csv carries the metadata header") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  CurvatureProfile p = curvature_profile(quadratic_field(A), Tensor({2}, {1, 1}), 0.25);
  std::string csv = profile_to_csv(p, 1, 42);
  CHECK(csv.find("# h,0.25") != std::string::npos);
  CHECK(csv.find("# samples,1") != std::string::npos);
  CHECK(csv.find("# estimator,full") != std::string::npos);
  CHECK(csv.find("# seed,42") != std::string::npos);
  CHECK(csv.find("rank,eigenvalue") != std::string::npos);
  CHECK(csv.find("\n0,") != std::string::npos);
}

}  // TEST_SUITE
