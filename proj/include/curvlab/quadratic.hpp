#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

namespace curvlab {

/// Second-order surrogate of the loss around a point: the attacker gains
/// g.r + r'Hr/2 and needs at least c to cross the misclassification
/// threshold.
struct QuadraticModel {
  Tensor g;    // gradient, shape {d}
  Tensor H;    // symmetric Hessian, shape {d,d}
  double c = 0.0;
};

/// Checks shapes, symmetry (1e-12 relative) and c >= 0.
void validate_model(const QuadraticModel& m);

struct MinPerturbation {
  Tensor r;
  double norm = 0.0;
  double multiplier = 0.0;  // KKT multiplier of the active constraint
  bool hard_case = false;   // gradient orthogonal to the top eigenspace
};

/// Smallest r (in l2) with g.r + r'Hr/2 >= c, by secular-equation
/// bisection in the eigenbasis of H. Throws InfeasibleError when the
/// constraint set is empty (possible only when the top eigenvalue is <= 0).
MinPerturbation exact_min_perturbation(const QuadraticModel& m);

struct RobustnessBounds {
  double nu = 0.0;      // top eigenvalue
  double gtu = 0.0;     // |g . u| for the top unit eigenvector u
  double lower = 0.0;   // (|g|/nu)(sqrt(1 + 2 nu c/|g|^2) - 1)
  double upper = 0.0;   // same form with |g . u|
  double lower_simplified = 0.0;  // c/|g| - 2 nu c^2/|g|^3
  double upper_simplified = 0.0;  // c/|g.u| (infinite when g.u = 0)
  bool upper_is_limit = false;    // g.u ~ 0: upper evaluated as sqrt(2c/nu)
};

/// Both closed-form bound pairs. nu = 0 is handled as the analytic limit
/// (c/|g| and c/|g.u|); nu < 0 is rejected.
RobustnessBounds robustness_bounds(const QuadraticModel& m);

/// Shared stable evaluation of (sqrt(t^2 + 2 nu c) - t)/nu, written as
/// 2c/(t + sqrt(t^2 + 2 nu c)) so nu -> 0 and t -> 0 need no branches.
double bound_formula(double t, double nu, double c);

struct BoundCurveRow {
  double nu, lower, upper;
};
std::vector<BoundCurveRow> bound_curve(double gnorm, double c, double gtu,
                                       const std::vector<double>& nu_grid);
std::string bound_curve_to_csv(const std::vector<BoundCurveRow>& rows, double gnorm, double c,
                               double gtu);

struct SandwichReport {
  double lower_simplified = 0, lower = 0, exact = 0, upper = 0, upper_simplified = 0;
  bool ok_lower_simplified = false;  // lower_simplified <= lower
  bool ok_lower = false;             // lower <= exact
  bool ok_upper = false;             // exact <= upper
  bool ok_upper_simplified = false;  // upper <= upper_simplified
  bool ok() const { return ok_lower_simplified && ok_lower && ok_upper && ok_upper_simplified; }
};

/// Evaluates the exact norm and all four bounds on one model; inequality
/// flags use a 1e-9 absolute slack.
SandwichReport sandwich_check(const QuadraticModel& m);

/// Random-model protocol: d in {2..8}; eigenvalues uniform in [-2, 5],
/// redrawn until the maximum is >= 0.01; random orthogonal eigenbasis;
/// |g| uniform in [0.1, 3]; c uniform in [0.01, 2].
QuadraticModel random_model(Rng& rng);

std::string model_to_json(const QuadraticModel& m);
QuadraticModel model_from_json(const std::string& text);

struct SweepResult {
  int models = 0;
  int violations = 0;
  std::vector<std::string> counterexamples;  // JSON dumps, capped
};

/// sandwich_check over n random models; violating models are serialized.
SweepResult sandwich_sweep(int n_models, std::uint64_t seed, int max_dumps = 5);

}  // namespace curvlab
