#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "curvlab/error.hpp"
#include "curvlab/linalg.hpp"
#include "curvlab/quadratic.hpp"
#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

using namespace curvlab;

namespace {

QuadraticModel make_model(std::vector<double> g, std::vector<double> H, double c) {
  int d = static_cast<int>(g.size());
  return {Tensor({d}, std::move(g)), Tensor({d, d}, std::move(H)), c};
}

// Independent d=2 oracle: sweep directions; along each ray the constraint
// -c + b*rho + a*rho^2 >= 0 has a closed-form smallest positive root.
double polar_oracle(const QuadraticModel& m, int n_angles = 20000) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_angles; ++i) {
    double th = 2.0 * M_PI * i / n_angles;
    double w0 = std::cos(th), w1 = std::sin(th);
    double b = m.g[0] * w0 + m.g[1] * w1;
    double a = 0.5 * (m.H.at(0, 0) * w0 * w0 + 2 * m.H.at(0, 1) * w0 * w1 +
                      m.H.at(1, 1) * w1 * w1);
    double c = m.c;
    // smallest rho > 0 with a rho^2 + b rho - c >= 0
    double rho = std::numeric_limits<double>::infinity();
    if (std::fabs(a) < 1e-15) {
      if (b > 0) rho = c / b;
    } else {
      double disc = b * b + 4 * a * c;
      if (disc >= 0) {
        double sq = std::sqrt(disc);
        for (double cand : {(-b + sq) / (2 * a), (-b - sq) / (2 * a)})
          if (cand > 0 && a * cand * cand + b * cand - c >= -1e-12) rho = std::min(rho, cand);
        if (a > 0 && c == 0 && b >= 0) rho = 0;
      }
    }
    best = std::min(best, rho);
  }
  return best;
}

}  // namespace

TEST_SUITE("quadratic") {

TEST_CASE("collinear example: g=(1,0), H=diag(2,0), c=1") {
  auto m = make_model({1, 0}, {2, 0, 0, 0}, 1);
  MinPerturbation r = exact_min_perturbation(m);
  const double expect = (std::sqrt(5.0) - 1) / 2;
  CHECK(r.norm == doctest::Approx(expect).epsilon(1e-10));
  CHECK(r.r[0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(std::fabs(r.r[1]) < 1e-9);
  CHECK(r.norm == doctest::Approx(polar_oracle(m)).epsilon(1e-5));
}

TEST_CASE("orthogonal example: g=(1,0), H=diag(0,2), c=1") {
  auto m = make_model({1, 0}, {0, 0, 0, 2}, 1);
  MinPerturbation r = exact_min_perturbation(m);
  CHECK(r.norm == doctest::Approx(std::sqrt(3.0) / 2).epsilon(1e-10));
  CHECK(r.r[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(std::fabs(r.r[1]) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-8));
  CHECK(r.hard_case);
  CHECK(r.norm == doctest::Approx(polar_oracle(m)).epsilon(1e-5));
}

TEST_CASE("linear case: H=0 gives the hyperplane distance") {
  auto m = make_model({3, -4}, {0, 0, 0, 0}, 2);
  MinPerturbation r = exact_min_perturbation(m);
  CHECK(r.norm == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("c=0 sits on the threshold") {
  auto m = make_model({1, 1}, {1, 0, 0, 1}, 0);
  MinPerturbation r = exact_min_perturbation(m);
  CHECK(r.norm == 0.0);
  RobustnessBounds b = robustness_bounds(m);
  CHECK(b.lower == 0.0);
  CHECK(b.upper == 0.0);
}

TEST_CASE("concave loss: feasibility depends on the attainable gain") {
  // H = -I, g = (1,0): the gain g.r + r'Hr/2 peaks at 1/2
  auto feasible = make_model({1, 0}, {-1, 0, 0, -1}, 0.4);
  MinPerturbation r = exact_min_perturbation(feasible);
  CHECK(r.norm == doctest::Approx(polar_oracle(feasible)).epsilon(1e-5));
  double gain = -0.4 + dot(feasible.g, r.r) + 0.5 * dot(r.r, matvec(feasible.H, r.r));
  CHECK(gain >= -1e-9);

  auto infeasible = make_model({1, 0}, {-1, 0, 0, -1}, 1.0);
  CHECK_THROWS_AS(exact_min_perturbation(infeasible), InfeasibleError);

  auto flat = make_model({0, 0}, {-1, 0, 0, 0}, 0.5);
  CHECK_THROWS_AS(exact_min_perturbation(flat), InfeasibleError);
}

TEST_CASE("random d=2 models agree with the polar oracle") {
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    QuadraticModel m = random_model(rng);
    if (m.g.size() != 2) continue;
    ++checked;
    MinPerturbation r = exact_min_perturbation(m);
    double oracle = polar_oracle(m);
    CHECK(r.norm == doctest::Approx(oracle).epsilon(5e-4));
  }
  CHECK(checked > 10);
}

TEST_CASE("bounds on the collinear example meet the exact norm") {
  auto m = make_model({1, 0}, {2, 0, 0, 0}, 1);
  RobustnessBounds b = robustness_bounds(m);
  const double expect = (std::sqrt(5.0) - 1) / 2;
  CHECK(b.nu == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b.lower == doctest::Approx(expect).epsilon(1e-10));
  CHECK(b.upper == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("figure-parameter bounds at nu=1") {
  // |g|=1, c=1, g.u=0.5: realized by u=e1, g=(0.5, sqrt(3)/2), H=diag(1, 0)
  double s = std::sqrt(3.0) / 2;
  auto m = make_model({0.5, s}, {1, 0, 0, 0}, 1);
  RobustnessBounds b = robustness_bounds(m);
  CHECK(b.nu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.lower == doctest::Approx(std::sqrt(3.0) - 1).epsilon(1e-10));
  CHECK(b.upper == doctest::Approx(1.0).epsilon(1e-10));
  MinPerturbation r = exact_min_perturbation(m);
  CHECK(b.lower <= r.norm + 1e-9);
  CHECK(r.norm <= b.upper + 1e-9);
}

TEST_CASE("nu -> 0 limit reaches the linear-case distance") {
  auto m = make_model({1, 0}, {1e-9, 0, 0, 0}, 1);
  RobustnessBounds b = robustness_bounds(m);
  CHECK(std::fabs(b.lower - 1.0) < 1e-8);
  auto exact_zero = make_model({1, 0}, {0, 0, 0, 0}, 1);
  RobustnessBounds b0 = robustness_bounds(exact_zero);
  CHECK(b0.lower == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b0.upper == doctest::Approx(1.0).epsilon(1e-12));  // g collinear with any u at H=0
}

TEST_CASE("orthogonal gradient flips the upper bound to its limit form") {
  auto m = make_model({0, 1}, {2, 0, 0, 0}, 1);
  RobustnessBounds b = robustness_bounds(m);
  CHECK(b.upper_is_limit);
  CHECK(b.upper == doctest::Approx(1.0).epsilon(1e-10));  // sqrt(2c/nu) = 1
  CHECK(std::isinf(b.upper_simplified));
  MinPerturbation r = exact_min_perturbation(m);
  CHECK(r.norm <= b.upper + 1e-9);
}

TEST_CASE("negative top curvature is rejected for bounds") {
  auto m = make_model({1, 0}, {-1, 0, 0, -2}, 0.1);
  CHECK_THROWS_AS(robustness_bounds(m), Error);
}

TEST_CASE("bound formula limits") {
  CHECK(bound_formula(0.0, 2.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));  // sqrt(2c/nu)
  CHECK(bound_formula(1.0, 0.0, 0.5) == doctest::Approx(0.5).epsilon(1e-12));  // c/t
  CHECK(bound_formula(1.0, 3.0, 0.0) == 0.0);
  // generic point matches the radical form
  double t = 0.7, nu = 1.3, c = 0.9;
  CHECK(bound_formula(t, nu, c) ==
        doctest::Approx((std::sqrt(t * t + 2 * nu * c) - t) / nu).epsilon(1e-12));
}

TEST_CASE("bound curve: monotone in nu, correct limits") {
  std::vector<double> grid;
  for (int i = 0; i < 400; ++i) grid.push_back(1e-9 + i * 0.01);
  auto rows = bound_curve(1.0, 1.0, 0.5, grid);
  REQUIRE(rows.size() == grid.size());
  CHECK(std::fabs(rows[0].lower - 1.0) < 1e-6);
  CHECK(std::fabs(rows[0].upper - 2.0) < 1e-6);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].lower < rows[i - 1].lower);
    CHECK(rows[i].upper < rows[i - 1].upper);
    CHECK(rows[i].lower <= rows[i].upper);
  }
  std::string csv = bound_curve_to_csv(rows, 1.0, 1.0, 0.5);
  CHECK(csv.find("nu,lower,upper") != std::string::npos);
}

TEST_CASE("sandwich holds on a batch of random models") {
  SweepResult sweep = sandwich_sweep(500, 12345);
  CHECK(sweep.models == 500);
  CHECK(sweep.violations == 0);
}

TEST_CASE("sandwich check reports all five numbers in order") {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    QuadraticModel m = random_model(rng);
    SandwichReport rep = sandwich_check(m);
    CHECK(rep.ok());
    CHECK(rep.lower_simplified <= rep.lower + 1e-9);
    CHECK(rep.lower <= rep.exact + 1e-9);
    CHECK(rep.exact <= rep.upper + 1e-9);
    CHECK(rep.upper <= rep.upper_simplified + 1e-9);
  }
}

TEST_CASE("collinear family is tight") {
  Rng rng(41);
  for (int i = 0; i < 30; ++i) {
    QuadraticModel m = random_model(rng);
    auto eig = jacobi_eigen(m.H);
    int d = static_cast<int>(m.g.size());
    Tensor u = eig.eigenvector(d - 1);
    double gn = 0.1 + 2.9 * rng.uniform();
    m.g = gn * u;  // force g parallel to the top eigenvector
    SandwichReport rep = sandwich_check(m);
    CHECK(rep.lower == doctest::Approx(rep.exact).epsilon(1e-9));
    CHECK(rep.upper == doctest::Approx(rep.exact).epsilon(1e-9));
  }
}

TEST_CASE("model generator follows the documented protocol") {
  Rng a(77), b(77);
  QuadraticModel m1 = random_model(a);
  QuadraticModel m2 = random_model(b);
  REQUIRE(m1.g.size() == m2.g.size());
  for (std::int64_t i = 0; i < m1.g.size(); ++i) CHECK(m1.g[i] == m2.g[i]);
  for (std::int64_t i = 0; i < m1.H.size(); ++i) CHECK(m1.H[i] == m2.H[i]);
  CHECK(m1.c == m2.c);

  Rng rng(83);
  for (int i = 0; i < 100; ++i) {
    QuadraticModel m = random_model(rng);
    int d = static_cast<int>(m.g.size());
    CHECK(d >= 2);
    CHECK(d <= 8);
    double gn = norm2(m.g);
    CHECK(gn >= 0.1 - 1e-12);
    CHECK(gn <= 3.0 + 1e-12);
    CHECK(m.c >= 0.01);
    CHECK(m.c <= 2.0);
    auto eig = jacobi_eigen(m.H);
    CHECK(eig.eigenvalues.back() >= 0.01 - 1e-9);
    CHECK(eig.eigenvalues.front() >= -2.0 - 1e-9);
    CHECK(eig.eigenvalues.back() <= 5.0 + 1e-9);
    CHECK_NOTHROW(validate_model(m));
  }
}

TEST_CASE("model json round trip") {
  auto m = make_model({1, -0.5}, {2, 0.25, 0.25, -1}, 0.75);
  QuadraticModel r = model_from_json(model_to_json(m));
  CHECK(r.c == m.c);
  for (int i = 0; i < 2; ++i) CHECK(r.g[i] == m.g[i]);
  for (int i = 0; i < 4; ++i) CHECK(r.H[i] == m.H[i]);
}

TEST_CASE("model validation: symmetry, c sign, shapes") {
  CHECK_THROWS_AS(validate_model(make_model({1, 0}, {1, 0.1, 0.2, 1}, 0.5)), Error);
  CHECK_THROWS_AS(validate_model(make_model({1, 0}, {1, 0, 0, 1}, -0.1)), Error);
  QuadraticModel bad{Tensor({3}, {1, 0, 0}), Tensor({2, 2}, {1, 0, 0, 1}), 0.5};
  CHECK_THROWS_AS(validate_model(bad), ShapeError);
}

}  // TEST_SUITE
