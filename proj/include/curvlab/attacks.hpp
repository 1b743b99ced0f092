#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "curvlab/data.hpp"
#include "curvlab/error.hpp"
#include "curvlab/network.hpp"
#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

namespace curvlab {

struct AttackSpec {
  std::string family = "pgd";  // fgsm | pgd | deepfool-l2 | deepfool-linf | spsa
  double epsilon = 0.0;        // l-inf budget, data units
  int steps = 20;              // iterations (spsa default is 100; see make_spec)
  double step_size = 0.0;      // 0 -> 2.5 eps/steps (pgd), eps/10 (spsa)
  int spsa_batch = 128;
  double spsa_delta = 0.0;     // 0 -> 0.01 * data range
  bool random_start = true;    // pgd only
  std::uint64_t seed = 0;

  void validate() const;
  AttackSpec with_seed(std::uint64_t s) const;
};

/// Spec with per-family defaults filled in (steps, deepfool iteration cap).
AttackSpec make_spec(const std::string& family, double eps, std::uint64_t seed = 0);

struct AttackResult {
  Tensor x_adv;
  bool success = false;   // prediction at x_adv differs from y
  int grad_queries = 0;
  int forward_queries = 0;
  double margin = 0.0;    // margin_loss at x_adv
  bool degenerate = false;  // zero gradient encountered where one was needed
};

/// Loss-and-gradient closure: lets the iterative cores run on analytic toy
/// losses as well as networks.
using LossGrad = std::function<std::pair<double, Tensor>(const Tensor&)>;

AttackResult fgsm_core(const LossGrad& lg, const Tensor& x, double eps, const Box& box);
AttackResult pgd_core(const LossGrad& lg, const Tensor& x, const AttackSpec& spec, const Box& box);
/// Maximizes a forward-only objective by simultaneous-perturbation ascent;
/// the gradient-free guarantee is structural (no gradient closure exists here).
AttackResult spsa_core(const std::function<double(const Tensor&)>& objective, const Tensor& x,
                       const AttackSpec& spec, const Box& box);
/// One batch-averaged simultaneous-perturbation gradient estimate.
Tensor spsa_gradient_estimate(const std::function<double(const Tensor&)>& objective,
                              const Tensor& x, double delta, int batch, Rng& rng,
                              int* forward_queries = nullptr);

AttackResult fgsm(NetEval& eval, const Tensor& x, int y, double eps, const Box& box);
AttackResult pgd(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec, const Box& box);
AttackResult spsa(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec, const Box& box);

struct DeepFoolResult {
  Tensor r;         // raw accumulated perturbation (no overshoot applied)
  int iterations = 0;
  int grad_queries = 0;
  int forward_queries = 0;
};

/// Carries the perturbation accumulated before the iteration cap hit.
struct DeepFoolError : ConvergenceError {
  DeepFoolError(const std::string& msg, int iterations, Tensor partial)
      : ConvergenceError(msg, iterations), partial_r(std::move(partial)) {}
  Tensor partial_r;
};

inline constexpr double kDeepFoolOvershoot = 0.02;

/// Iterative nearest-hyperplane linearization; stops when the label at
/// x + (1+overshoot) r flips. norm is "l2" or "linf".
DeepFoolResult deepfool(NetEval& eval, const Tensor& x, const std::string& norm,
                        int max_iters = 50);

double margin_loss(NetEval& eval, const Tensor& x, int y);

/// Family dispatch. DeepFool variants apply the overshoot, then scale the
/// perturbation down to the eps budget when one is set, and clip to the box.
AttackResult run_attack(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec,
                        const Box& box);

struct SampleEvalRow {
  int sample_id = 0;
  bool clean_correct = false;
  std::string family;
  double eps = 0.0;
  bool success = false;
  double margin_clean = 0.0;
  double margin_adv = 0.0;
  int queries = 0;
};

struct AttackEvaluation {
  std::vector<SampleEvalRow> rows;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
};

/// Per-sample attack sweep over a dataset. Clean mistakes count as
/// adversarial failures and are not attacked; per-sample attack seeds are
/// spec.seed xor the sample index.
AttackEvaluation evaluate_attack(NetEval& eval, const Dataset& data, const AttackSpec& spec);
double adversarial_accuracy(NetEval& eval, const Dataset& data, const AttackSpec& spec);

std::string evaluation_to_csv(const AttackEvaluation& ev);

}  // namespace curvlab
