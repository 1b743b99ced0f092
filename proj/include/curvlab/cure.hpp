#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curvlab/attacks.hpp"
#include "curvlab/curvature.hpp"
#include "curvlab/data.hpp"
#include "curvlab/error.hpp"
#include "curvlab/network.hpp"

namespace curvlab {

struct CureConfig {
  double gamma = 4.0;
  std::vector<double> gamma_schedule;  // per-epoch override; last value holds
  double h_max = 1.5;
  int h_ramp_epochs = 5;
  int epochs = 20;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double eps_m = 0.0;  // 0 -> 1e-3 (1 + |x|_inf) per sample

  bool record_history = true;
  int history_points = 50;    // eval subset size for per-epoch statistics
  int frobenius_samples = 10; // Hutchinson draws per probe point
  int frobenius_points = 10;  // probe points for frobenius / |Hz| stats

  void validate() const;
  double gamma_at(int epoch) const;
  double h_at(int epoch) const;
  double lr_at(int epoch) const;
};

/// Unit vector along the sign pattern of the gradient.
Tensor cure_direction(const Tensor& grad);
Tensor cure_direction(NetEval& eval, const Tensor& x, int y);

/// |grad(x + h z) - grad(x)|^2 with z = cure_direction at x.
double cure_penalty(NetEval& eval, const Tensor& x, int y, double h);
double cure_penalty(const LossField& f, const Tensor& x, double h);

/// Parameter gradient of the penalty via the mixed-derivative difference:
/// with x1 = x + h z and dvec = grad_x(x1) - grad_x(x) held constant,
/// (2/eps_m) [g_th(x1 + eps_m dvec) - g_th(x1) - g_th(x + eps_m dvec) + g_th(x)].
std::map<std::string, Tensor> cure_param_gradient(NetEval& eval, const Tensor& x, int y, double h,
                                                  double eps_m);

struct EpochRecord {
  int epoch = 0;
  double frobenius = 0.0;
  double hz_norm = 0.0;
  double adv_accuracy = 0.0;
  double clean_accuracy = 0.0;
  double mean_lr = 0.0;  // mean penalty L_r over the probe points
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
};

/// Training aborted on a non-finite or exploding loss; the history covers
/// the epochs completed before the failure.
struct DivergenceError : Error {
  DivergenceError(const std::string& msg, TrainingHistory partial)
      : Error(msg), history(std::move(partial)) {}
  TrainingHistory history;
};

struct FinetuneResult {
  Network net;
  TrainingHistory history;
};

/// Adam fine-tuning of loss + gamma L_r with the linear h ramp and
/// geometric learning-rate decay. gamma = 0 reproduces plain training
/// exactly (the penalty path is never entered).
FinetuneResult finetune_cure(const Network& start, const Dataset& train, const Dataset& eval_set,
                             const CureConfig& cfg, const AttackSpec& attack);

/// Plain cross-entropy training: the gamma = 0 configuration of the same
/// loop, starting from a fresh seeded initialization of `layers`.
Network train_baseline(const std::vector<LayerSpec>& layers, const Dataset& train, int epochs,
                       double lr, std::uint64_t seed);

std::string history_to_csv(const TrainingHistory& history);
std::string cure_config_to_json(const CureConfig& cfg, const AttackSpec& attack);

}  // namespace curvlab
