#include <doctest.h>

#include <cmath>
#include <vector>

#include "curvlab/error.hpp"
#include "curvlab/linalg.hpp"
#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

using namespace curvlab;

namespace {

Tensor random_symmetric(int d, Rng& rng) {
  Tensor A({d, d});
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) {
      double v = rng.normal();
      A.at(i, j) = v;
      A.at(j, i) = v;
    }
  return A;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("matvec") {
  Tensor A({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor v({3}, {1, 0, -1});
  Tensor r = matvec(A, v);
  CHECK(r[0] == -2);
  CHECK(r[1] == -2);
  CHECK_THROWS_AS(matvec(A, Tensor({2}, {1, 2})), ShapeError);
}

TEST_CASE("2x2 closed form: eigenvalues of [[2,1],[1,3]]") {
  Tensor A({2, 2}, {2, 1, 1, 3});
  auto eig = jacobi_eigen(A);
  const double lo = (5.0 - std::sqrt(5.0)) / 2.0;  // 1.3820
  const double hi = (5.0 + std::sqrt(5.0)) / 2.0;  // 3.6180
  REQUIRE(eig.eigenvalues.size() == 2);
  CHECK(eig.eigenvalues[0] == doctest::Approx(lo).epsilon(1e-12));
  CHECK(eig.eigenvalues[1] == doctest::Approx(hi).epsilon(1e-12));
  // frobenius norm is preserved: sum of squared eigenvalues = 15
  CHECK(lo * lo + hi * hi == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("diagonal matrix: sorted eigenvalues, coordinate eigenvectors") {
  Tensor A({3, 3}, {5, 0, 0, 0, -1, 0, 0, 0, 2});
  auto eig = jacobi_eigen(A);
  CHECK(eig.eigenvalues[0] == doctest::Approx(-1).epsilon(1e-14));
  CHECK(eig.eigenvalues[1] == doctest::Approx(2).epsilon(1e-14));
  CHECK(eig.eigenvalues[2] == doctest::Approx(5).epsilon(1e-14));
  // eigenvector of -1 is e1 with positive peak component
  Tensor v = eig.eigenvector(0);
  CHECK(std::fabs(v[1]) == doctest::Approx(1).epsilon(1e-12));
  CHECK(v[1] > 0);
}

TEST_CASE("random symmetric: reconstruction and orthonormality") {
  Rng rng(17);
  Tensor A = random_symmetric(8, rng);
  auto eig = jacobi_eigen(A);
  // V orthonormal
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double d = 0;
      for (int k = 0; k < 8; ++k) d += eig.eigenvectors.at(k, i) * eig.eigenvectors.at(k, j);
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
    }
  // A v_j = lambda_j v_j
  for (int j = 0; j < 8; ++j) {
    Tensor v = eig.eigenvector(j);
    Tensor Av = matvec(A, v);
    for (int i = 0; i < 8; ++i)
      CHECK(Av[i] == doctest::Approx(eig.eigenvalues[j] * v[i]).epsilon(1e-9));
  }
  // eigenvalues ascending
  for (int j = 1; j < 8; ++j) CHECK(eig.eigenvalues[j] >= eig.eigenvalues[j - 1]);
  // trace and frobenius preserved
  double tr = 0, frob = 0, sum = 0, sq = 0;
  for (int i = 0; i < 8; ++i) {
    tr += A.at(i, i);
    sum += eig.eigenvalues[i];
    sq += eig.eigenvalues[i] * eig.eigenvalues[i];
    for (int j = 0; j < 8; ++j) frob += A.at(i, j) * A.at(i, j);
  }
  CHECK(sum == doctest::Approx(tr).epsilon(1e-10));
  CHECK(sq == doctest::Approx(frob).epsilon(1e-10));
}

TEST_CASE("asymmetric input is rejected") {
  Tensor A({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(jacobi_eigen(A), Error);
}

TEST_CASE("lanczos finds both extremes of a diagonal operator") {
  const int d = 50;
  auto apply = [&](const Tensor& v) {
    Tensor out = v;
    for (int i = 0; i < d; ++i) out[i] *= (i + 1);
    return out;
  };
  auto top = lanczos_extremal(apply, d, true);
  auto bottom = lanczos_extremal(apply, d, false);
  CHECK(top.value == doctest::Approx(50).epsilon(1e-8));
  CHECK(bottom.value == doctest::Approx(1).epsilon(1e-8));
  // returned vectors are unit eigenvectors
  CHECK(norm2(top.vector) == doctest::Approx(1).epsilon(1e-10));
  Tensor Av = apply(top.vector);
  for (int i = 0; i < d; ++i)
    CHECK(Av[i] == doctest::Approx(top.value * top.vector[i]).epsilon(1e-6));
}

TEST_CASE("lanczos agrees with jacobi on a random matrix") {
  Rng rng(23);
  Tensor A = random_symmetric(30, rng);
  auto eig = jacobi_eigen(A);
  auto apply = [&](const Tensor& v) { return matvec(A, v); };
  auto top = lanczos_extremal(apply, 30, true);
  auto bottom = lanczos_extremal(apply, 30, false);
  CHECK(top.value == doctest::Approx(eig.eigenvalues[29]).epsilon(1e-8));
  CHECK(bottom.value == doctest::Approx(eig.eigenvalues[0]).epsilon(1e-8));
}

TEST_CASE("lanczos_extremes returns bottom-k and top-k") {
  Rng rng(29);
  Tensor A = random_symmetric(40, rng);
  auto eig = jacobi_eigen(A);
  auto apply = [&](const Tensor& v) { return matvec(A, v); };
  auto ext = lanczos_extremes(apply, 40, 3);
  REQUIRE(ext.size() == 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(ext[i] == doctest::Approx(eig.eigenvalues[i]).epsilon(1e-7));
    CHECK(ext[3 + i] == doctest::Approx(eig.eigenvalues[37 + i]).epsilon(1e-7));
  }
}

}  // TEST_SUITE
