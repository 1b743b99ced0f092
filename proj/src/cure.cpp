#include "curvlab/cure.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "curvlab/curvature.hpp"
#include "curvlab/io.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {

void CureConfig::validate() const {
  if (!(lr_start >= lr_end && lr_end > 0))
    throw Error("cure config: need lr-start >= lr-end > 0");
  if (h_max <= 0) throw Error("cure config: need h-max > 0");
  if (epochs < 0 || h_ramp_epochs < 0) throw Error("cure config: negative epoch count");
  if (batch_size < 1) throw Error("cure config: batch size must be >= 1");
  if (gamma < 0) throw Error("cure config: gamma must be >= 0");
  for (double g : gamma_schedule)
    if (g < 0) throw Error("cure config: gamma schedule entries must be >= 0");
  if (eps_m < 0) throw Error("cure config: mixed-derivative step must be positive");
}

double CureConfig::gamma_at(int epoch) const {
  if (gamma_schedule.empty()) return gamma;
  std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(epoch),
                                        gamma_schedule.size() - 1);
  return gamma_schedule[i];
}

double CureConfig::h_at(int epoch) const {
  if (h_ramp_epochs <= 0) return h_max;
  double f = static_cast<double>(epoch) / h_ramp_epochs;
  return h_max * std::min(1.0, f);
}

double CureConfig::lr_at(int epoch) const {
  if (epochs <= 1 || lr_start == lr_end) return lr_start;
  double t = static_cast<double>(epoch) / (epochs - 1);
  return lr_start * std::pow(lr_end / lr_start, t);
}

Tensor cure_direction(const Tensor& grad) {
  Tensor z = sign(grad);
  double n = norm2(z);
  if (n == 0.0) throw Error("cure_direction: zero gradient, direction undefined");
  scale_inplace(z, 1.0 / n);
  return z;
}

Tensor cure_direction(NetEval& eval, const Tensor& x, int y) {
  return cure_direction(eval.input_gradient(x, y));
}

namespace {

double default_eps_m(const Tensor& x) { return 1e-3 * (1.0 + norm_inf(x)); }

// Shared computation of the penalty value and (optionally) its parameter
// gradient scaled by `scale`, accumulated into `acc`.
double cure_penalty_and_grad(NetEval& eval, const Tensor& x, int y, double h, double eps_m,
                             double scale, std::map<std::string, Tensor>* acc) {
  Tensor g0 = eval.input_gradient(x, y);
  check_finite(g0, "cure gradient at x");
  Tensor z = cure_direction(g0);
  Tensor x1 = x;
  axpy(h, z, x1);
  Tensor g1 = eval.input_gradient(x1, y);
  check_finite(g1, "cure gradient at x+hz");
  Tensor dvec = g1 - g0;
  double penalty = dot(dvec, dvec);
  if (acc) {
    if (eps_m <= 0) eps_m = default_eps_m(x);
    double w = 2.0 * scale / eps_m;
    Tensor shifted = x1;
    axpy(eps_m, dvec, shifted);
    eval.accumulate_param_gradient(shifted, y, w, *acc);
    eval.accumulate_param_gradient(x1, y, -w, *acc);
    shifted = x;
    axpy(eps_m, dvec, shifted);
    eval.accumulate_param_gradient(shifted, y, -w, *acc);
    eval.accumulate_param_gradient(x, y, w, *acc);
  }
  return penalty;
}

}  // namespace

double cure_penalty(NetEval& eval, const Tensor& x, int y, double h) {
  if (h <= 0) throw Error("cure_penalty: need h > 0");
  return cure_penalty_and_grad(eval, x, y, h, 0.0, 0.0, nullptr);
}

double cure_penalty(const LossField& f, const Tensor& x, double h) {
  if (h <= 0) throw Error("cure_penalty: need h > 0");
  Tensor g0 = f.gradient(x);
  Tensor z = cure_direction(g0);
  Tensor x1 = x;
  axpy(h, z, x1);
  Tensor d = f.gradient(x1) - g0;
  return dot(d, d);
}

std::map<std::string, Tensor> cure_param_gradient(NetEval& eval, const Tensor& x, int y, double h,
                                                  double eps_m) {
  if (h <= 0) throw Error("cure_param_gradient: need h > 0");
  std::map<std::string, Tensor> acc;
  cure_penalty_and_grad(eval, x, y, h, eps_m, 1.0, &acc);
  return acc;
}

namespace {

struct AdamState {
  std::map<std::string, Tensor> m, v;
  std::int64_t t = 0;
};

void adam_step(Network& net, const std::map<std::string, Tensor>& grad, AdamState& state,
               double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.t;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (const std::string& name : net.param_names()) {
    const Tensor& g = grad.at(name);
    Tensor& p = net.param(name);
    auto mi = state.m.find(name);
    if (mi == state.m.end()) {
      state.m.emplace(name, Tensor::zeros_like(g));
      state.v.emplace(name, Tensor::zeros_like(g));
      mi = state.m.find(name);
    }
    Tensor& m = mi->second;
    Tensor& v = state.v.at(name);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      double mhat = m[i] / c1;
      double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

EpochRecord probe_epoch(NetEval& eval, const Dataset& eval_set, const CureConfig& cfg,
                        const AttackSpec& attack, int epoch) {
  EpochRecord rec;
  rec.epoch = epoch;
  double h = cfg.h_max;  // fixed probe scale: epochs stay comparable

  std::uint64_t probe_seed = Rng::derive(cfg.seed, "history-probe");
  std::vector<int> pts = sample_indices(eval_set.size(), cfg.frobenius_points, probe_seed);
  double frob = 0.0, hz = 0.0, lr_pen = 0.0;
  int used = 0;
  for (int i : pts) {
    const Tensor& x = eval_set.inputs[static_cast<std::size_t>(i)];
    int y = eval_set.labels[static_cast<std::size_t>(i)];
    frob += frobenius_estimate(eval, x, y, h, cfg.frobenius_samples,
                               Rng::derive(probe_seed, static_cast<std::uint64_t>(i)));
    Tensor g = eval.input_gradient(x, y);
    if (norm2(g) > 0) {
      Tensor z = cure_direction(g);
      hz += norm2(hvp(eval, x, y, z, h));
      lr_pen += cure_penalty(eval, x, y, h);
      ++used;
    }
  }
  int np = static_cast<int>(pts.size());
  rec.frobenius = np ? frob / np : 0.0;
  rec.hz_norm = used ? hz / used : 0.0;
  rec.mean_lr = used ? lr_pen / used : 0.0;

  std::vector<int> acc_pts = sample_indices(eval_set.size(), cfg.history_points,
                                            Rng::derive(cfg.seed, "history-eval"));
  Dataset sub = subset(eval_set, acc_pts);
  AttackEvaluation ev = evaluate_attack(eval, sub, attack);
  rec.adv_accuracy = ev.adversarial_accuracy;
  rec.clean_accuracy = ev.clean_accuracy;
  return rec;
}

}  // namespace

FinetuneResult finetune_cure(const Network& start, const Dataset& train, const Dataset& eval_set,
                             const CureConfig& cfg, const AttackSpec& attack) {
  cfg.validate();
  if (train.size() == 0) throw Error("finetune_cure: empty training set");
  Network net = start;
  NetEval eval(net);
  AdamState adam;
  Rng shuffle_rng(Rng::derive(cfg.seed, "shuffle"));
  TrainingHistory history;

  std::vector<int> order(static_cast<std::size_t>(train.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double gamma = cfg.gamma_at(epoch);
    double h = cfg.h_at(epoch);
    double lr = cfg.lr_at(epoch);
    shuffle_rng.shuffle(order);

    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      double inv = 1.0 / static_cast<double>(b1 - b0);
      std::map<std::string, Tensor> grad;
      double batch_loss = 0.0;
      for (std::size_t k = b0; k < b1; ++k) {
        int i = order[k];
        const Tensor& x = train.inputs[static_cast<std::size_t>(i)];
        int y = train.labels[static_cast<std::size_t>(i)];
        batch_loss += inv * eval.accumulate_param_gradient(x, y, inv, grad);
        if (gamma > 0 && h > 0) {
          Tensor g0 = eval.input_gradient(x, y);
          if (norm2(g0) > 0)
            cure_penalty_and_grad(eval, x, y, h, cfg.eps_m, gamma * inv, &grad);
        }
      }
      if (!std::isfinite(batch_loss) || batch_loss > 1e6)
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  " (batch loss " + format_double(batch_loss) + ")",
                              std::move(history));
      adam_step(net, grad, adam, lr);
    }
    net.set_epoch(start.epoch() + epoch + 1);
    if (cfg.record_history)
      history.epochs.push_back(probe_epoch(eval, eval_set, cfg, attack, epoch));
  }
  return {std::move(net), std::move(history)};
}

Network train_baseline(const std::vector<LayerSpec>& layers, const Dataset& train, int epochs,
                       double lr, std::uint64_t seed) {
  Network net = build_network(layers, seed);
  CureConfig cfg;
  cfg.gamma = 0.0;
  cfg.epochs = epochs;
  cfg.lr_start = cfg.lr_end = lr;
  cfg.seed = seed;
  cfg.record_history = false;
  FinetuneResult res = finetune_cure(net, train, train, cfg, make_spec("pgd", 0.0));
  return std::move(res.net);
}

std::string history_to_csv(const TrainingHistory& history) {
  CsvBuilder csv;
  csv.row("epoch", "frob", "hz-norm", "adv-acc", "clean-acc", "mean-Lr");
  for (const EpochRecord& r : history.epochs)
    csv.row(r.epoch, r.frobenius, r.hz_norm, r.adv_accuracy, r.clean_accuracy, r.mean_lr);
  return csv.str();
}

std::string cure_config_to_json(const CureConfig& cfg, const AttackSpec& attack) {
  nlohmann::json j;
  j["gamma"] = cfg.gamma;
  if (!cfg.gamma_schedule.empty()) j["gamma-schedule"] = cfg.gamma_schedule;
  j["h-max"] = cfg.h_max;
  j["h-ramp-epochs"] = cfg.h_ramp_epochs;
  j["epochs"] = cfg.epochs;
  j["lr-start"] = cfg.lr_start;
  j["lr-end"] = cfg.lr_end;
  j["batch-size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["eps-m"] = cfg.eps_m == 0.0 ? nlohmann::json("auto") : nlohmann::json(cfg.eps_m);
  j["history"] = {{"points", cfg.history_points},
                  {"frobenius-samples", cfg.frobenius_samples},
                  {"frobenius-points", cfg.frobenius_points}};
  j["attack"] = {{"family", attack.family}, {"eps", attack.epsilon},   {"steps", attack.steps},
                 {"step-size", attack.step_size}, {"random-start", attack.random_start},
                 {"seed", attack.seed}};
  return j.dump(2);
}

}  // namespace curvlab
