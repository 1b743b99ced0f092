#include "curvlab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "curvlab/io.hpp"

namespace curvlab {
namespace {

void project_ball(Tensor& x, const Tensor& center, double eps) {
  for (std::int64_t i = 0; i < x.size(); ++i) {
    double lo = center[i] - eps, hi = center[i] + eps;
    x[i] = std::min(std::max(x[i], lo), hi);
  }
}

double pgd_step_size(const AttackSpec& spec) {
  if (spec.step_size > 0) return spec.step_size;
  return 2.5 * spec.epsilon / spec.steps;
}

}  // namespace

void AttackSpec::validate() const {
  if (family != "fgsm" && family != "pgd" && family != "deepfool-l2" &&
      family != "deepfool-linf" && family != "spsa")
    throw Error("unknown attack family '" + family + "'");
  if (epsilon < 0) throw Error("attack: epsilon must be >= 0");
  if (steps < 1) throw Error("attack: steps must be >= 1");
  if (step_size < 0) throw Error("attack: step size must be positive");
  if (family == "spsa") {
    if (spsa_batch < 1) throw Error("attack: spsa batch must be >= 1");
    if (spsa_delta < 0) throw Error("attack: spsa delta must be positive");
  }
}

AttackSpec AttackSpec::with_seed(std::uint64_t s) const {
  AttackSpec out = *this;
  out.seed = s;
  return out;
}

AttackSpec make_spec(const std::string& family, double eps, std::uint64_t seed) {
  AttackSpec spec;
  spec.family = family;
  spec.epsilon = eps;
  spec.seed = seed;
  if (family == "spsa") spec.steps = 100;
  if (family == "deepfool-l2" || family == "deepfool-linf") spec.steps = 50;
  spec.validate();
  return spec;
}

AttackResult fgsm_core(const LossGrad& lg, const Tensor& x, double eps, const Box& box) {
  AttackResult res;
  auto [loss, g] = lg(x);
  (void)loss;
  res.grad_queries = 1;
  check_finite(g, "fgsm gradient");
  if (norm_inf(g) == 0.0) {
    res.x_adv = x;
    clip_to_box(res.x_adv, box);
    res.degenerate = true;
    return res;
  }
  res.x_adv = x;
  axpy(eps, sign(g), res.x_adv);
  clip_to_box(res.x_adv, box);
  return res;
}

AttackResult pgd_core(const LossGrad& lg, const Tensor& x, const AttackSpec& spec, const Box& box) {
  spec.validate();
  double eps = spec.epsilon;
  double step = pgd_step_size(spec);
  AttackResult res;

  Tensor cur = x;
  if (spec.random_start && eps > 0) {
    Rng rng(spec.seed);
    for (std::int64_t i = 0; i < cur.size(); ++i) cur[i] += rng.uniform(-eps, eps);
    clip_to_box(cur, box);
    project_ball(cur, x, eps);
  }

  double best_loss = -std::numeric_limits<double>::infinity();
  Tensor best = cur;
  for (int k = 0; k < spec.steps; ++k) {
    auto [loss, g] = lg(cur);
    ++res.grad_queries;
    check_finite(g, "pgd gradient");
    if (loss > best_loss) {
      best_loss = loss;
      best = cur;
    }
    if (norm_inf(g) == 0.0) {
      res.degenerate = true;
      break;
    }
    axpy(step, sign(g), cur);
    project_ball(cur, x, eps);
    clip_to_box(cur, box);
  }
  if (!res.degenerate) {
    auto [loss, g] = lg(cur);
    (void)g;
    ++res.grad_queries;
    if (loss > best_loss) {
      best_loss = loss;
      best = cur;
    }
  }
  res.x_adv = std::move(best);
  return res;
}

Tensor spsa_gradient_estimate(const std::function<double(const Tensor&)>& objective,
                              const Tensor& x, double delta, int batch, Rng& rng,
                              int* forward_queries) {
  Tensor est = Tensor::zeros_like(x);
  Tensor probe = Tensor::zeros_like(x);
  for (int b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < probe.size(); ++i)
      probe[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Tensor plus = x, minus = x;
    axpy(delta, probe, plus);
    axpy(-delta, probe, minus);
    double diff = (objective(plus) - objective(minus)) / (2.0 * delta);
    if (forward_queries) *forward_queries += 2;
    // Rademacher probes: 1/v_i = v_i.
    axpy(diff / batch, probe, est);
  }
  return est;
}

AttackResult spsa_core(const std::function<double(const Tensor&)>& objective, const Tensor& x,
                       const AttackSpec& spec, const Box& box) {
  spec.validate();
  double eps = spec.epsilon;
  double delta = spec.spsa_delta > 0 ? spec.spsa_delta : 0.01 * box.range();
  double lr = spec.step_size > 0 ? spec.step_size : eps / 10.0;
  AttackResult res;
  Rng rng(spec.seed);

  Tensor cur = x;
  clip_to_box(cur, box);
  double best_val = objective(cur);
  ++res.forward_queries;
  Tensor best = cur;
  if (eps == 0.0 || lr == 0.0) {
    res.x_adv = std::move(best);
    return res;
  }
  for (int k = 0; k < spec.steps; ++k) {
    Tensor g = spsa_gradient_estimate(objective, cur, delta, spec.spsa_batch, rng,
                                      &res.forward_queries);
    axpy(lr, sign(g), cur);
    project_ball(cur, x, eps);
    clip_to_box(cur, box);
    double val = objective(cur);
    ++res.forward_queries;
    if (val > best_val) {
      best_val = val;
      best = cur;
    }
  }
  res.x_adv = std::move(best);
  return res;
}

namespace {

LossGrad net_loss_grad(NetEval& eval, int y) {
  return [&eval, y](const Tensor& x) {
    double loss = eval.loss(x, y);
    Tensor g = eval.input_gradient(x, y);
    return std::make_pair(loss, std::move(g));
  };
}

double margin_from_logits(const Tensor& l, int y) {
  double other = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j < l.size(); ++j)
    if (j != y) other = std::max(other, l[j]);
  return l[y] - other;
}

void finish(NetEval& eval, int y, AttackResult& res) {
  Tensor l = eval.logits(res.x_adv);
  ++res.forward_queries;
  res.success = argmax(l) != y;
  res.margin = margin_from_logits(l, y);
}

}  // namespace

AttackResult fgsm(NetEval& eval, const Tensor& x, int y, double eps, const Box& box) {
  AttackResult res = fgsm_core(net_loss_grad(eval, y), x, eps, box);
  finish(eval, y, res);
  return res;
}

AttackResult pgd(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec, const Box& box) {
  AttackResult res = pgd_core(net_loss_grad(eval, y), x, spec, box);
  finish(eval, y, res);
  return res;
}

AttackResult spsa(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec, const Box& box) {
  // Ascend the negated margin; forward passes only.
  auto objective = [&eval, y](const Tensor& p) { return -margin_loss(eval, p, y); };
  AttackResult res = spsa_core(objective, x, spec, box);
  finish(eval, y, res);
  return res;
}

double margin_loss(NetEval& eval, const Tensor& x, int y) {
  Tensor l = eval.logits(x);
  if (y < 0 || y >= l.size()) throw Error("margin_loss: label out of range");
  double other = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j < l.size(); ++j)
    if (j != y) other = std::max(other, l[j]);
  return l[y] - other;
}

DeepFoolResult deepfool(NetEval& eval, const Tensor& x, const std::string& norm, int max_iters) {
  if (norm != "l2" && norm != "linf") throw Error("deepfool: norm must be l2 or linf");
  bool l2 = norm == "l2";
  Tensor l0_logits = eval.logits(x);
  int orig = argmax(l0_logits);
  int K = static_cast<int>(l0_logits.size());

  DeepFoolResult out;
  out.r = Tensor::zeros_like(x);
  ++out.forward_queries;
  Tensor probe = x;

  for (int it = 0; it < max_iters; ++it) {
    // Overshot point decides convergence.
    Tensor shot = x;
    axpy(1.0 + kDeepFoolOvershoot, out.r, shot);
    Tensor shot_logits = eval.logits(shot);
    ++out.forward_queries;
    if (argmax(shot_logits) != orig) {
      out.iterations = it;
      return out;
    }

    probe = x;
    axpy(1.0, out.r, probe);
    Tensor logits_here = eval.logits(probe);
    ++out.forward_queries;

    double best_ratio = std::numeric_limits<double>::infinity();
    Tensor best_w;
    double best_f = 0.0;
    Tensor seed({K});
    for (int k = 0; k < K; ++k) {
      if (k == orig) continue;
      seed.fill(0.0);
      seed[k] = 1.0;
      seed[orig] = -1.0;
      Tensor w = eval.logits_input_gradient(probe, seed);  // grad of f_k - f_orig
      ++out.grad_queries;
      double fk = logits_here[k] - logits_here[orig];
      double wn = l2 ? norm2(w) : norm1(w);
      if (wn < 1e-30) continue;
      double ratio = std::abs(fk) / wn;
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best_w = std::move(w);
        best_f = fk;
      }
    }
    if (!std::isfinite(best_ratio))
      throw DeepFoolError("deepfool: all candidate hyperplanes degenerate", it, out.r);

    // Step exactly onto the nearest linearized boundary (in the chosen norm).
    if (l2) {
      double wn2 = norm2(best_w);
      axpy(std::abs(best_f) / (wn2 * wn2), best_w, out.r);
    } else {
      double wn1 = norm1(best_w);
      Tensor s = sign(best_w);
      axpy(std::abs(best_f) / wn1, s, out.r);
    }
  }
  Tensor shot = x;
  axpy(1.0 + kDeepFoolOvershoot, out.r, shot);
  ++out.forward_queries;
  if (argmax(eval.logits(shot)) != orig) {
    out.iterations = max_iters;
    return out;
  }
  throw DeepFoolError("deepfool: no label flip within " + std::to_string(max_iters) +
                          " iterations",
                      max_iters, out.r);
}

AttackResult run_attack(NetEval& eval, const Tensor& x, int y, const AttackSpec& spec,
                        const Box& box) {
  spec.validate();
  if (spec.family == "fgsm") return fgsm(eval, x, y, spec.epsilon, box);
  if (spec.family == "pgd") return pgd(eval, x, y, spec, box);
  if (spec.family == "spsa") return spsa(eval, x, y, spec, box);

  // DeepFool families: minimal perturbation, overshoot applied, then the
  // final perturbation is scaled onto the eps budget (not per-iterate).
  std::string norm = spec.family == "deepfool-l2" ? "l2" : "linf";
  AttackResult res;
  try {
    DeepFoolResult df = deepfool(eval, x, norm, spec.steps);
    res.grad_queries = df.grad_queries;
    res.forward_queries = df.forward_queries;
    res.x_adv = x;
    Tensor delta = (1.0 + kDeepFoolOvershoot) * df.r;
    if (spec.epsilon > 0) {
      double dn = norm_inf(delta);
      if (dn > spec.epsilon) scale_inplace(delta, spec.epsilon / dn);
    }
    axpy(1.0, delta, res.x_adv);
    clip_to_box(res.x_adv, box);
  } catch (const DeepFoolError& e) {
    res.x_adv = x;
    res.degenerate = true;
  }
  finish(eval, y, res);
  return res;
}

AttackEvaluation evaluate_attack(NetEval& eval, const Dataset& data, const AttackSpec& spec) {
  spec.validate();
  AttackEvaluation out;
  int clean_ok = 0, adv_ok = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Tensor& x = data.inputs[static_cast<std::size_t>(i)];
    int y = data.labels[static_cast<std::size_t>(i)];
    SampleEvalRow row;
    row.sample_id = i;
    row.family = spec.family;
    row.eps = spec.epsilon;
    Tensor clean_logits = eval.logits(x);
    row.margin_clean = margin_from_logits(clean_logits, y);
    row.clean_correct = argmax(clean_logits) == y;
    if (!row.clean_correct) {
      // Clean mistake: counts against adversarial accuracy, no attack run.
      row.success = true;
      row.margin_adv = row.margin_clean;
      row.queries = 1;
    } else {
      ++clean_ok;
      AttackResult res =
          run_attack(eval, x, y, spec.with_seed(spec.seed ^ static_cast<std::uint64_t>(i)), data.range);
      row.success = res.success;
      row.margin_adv = res.margin;
      row.queries = res.grad_queries + res.forward_queries;
      if (!res.success) ++adv_ok;
    }
    out.rows.push_back(std::move(row));
  }
  int n = data.size();
  out.clean_accuracy = n ? static_cast<double>(clean_ok) / n : 0.0;
  out.adversarial_accuracy = n ? static_cast<double>(adv_ok) / n : 0.0;
  return out;
}

double adversarial_accuracy(NetEval& eval, const Dataset& data, const AttackSpec& spec) {
  return evaluate_attack(eval, data, spec).adversarial_accuracy;
}

std::string evaluation_to_csv(const AttackEvaluation& ev) {
  CsvBuilder csv;
  csv.comment("clean-accuracy", ev.clean_accuracy);
  csv.comment("adversarial-accuracy", ev.adversarial_accuracy);
  csv.row("sample-id", "clean-correct", "attack-family", "eps", "success", "margin-clean",
          "margin-adv", "queries");
  for (const auto& r : ev.rows)
    csv.row(r.sample_id, static_cast<int>(r.clean_correct), r.family, r.eps,
            static_cast<int>(r.success), r.margin_clean, r.margin_adv, r.queries);
  return csv.str();
}

}  // namespace curvlab
