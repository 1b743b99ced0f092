#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curvlab/cure.hpp"
#include "curvlab/data.hpp"

namespace curvlab {

/// One JSON document drives a full run; every stochastic component draws
/// its seed from `seed` through tagged derivation, so a config replays
/// byte-identically.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output = "out";

  // dataset
  std::string dataset_kind = "two-moons";  // two-moons | gaussians | spirals | idx
  int n = 600;
  double noise = 0.1;
  int k = 3;
  double spread = 0.3;
  int turns = 2;
  double test_fraction = 0.25;
  std::string idx_images, idx_labels, idx_test_images, idx_test_labels;

  std::string network = "mlp-2d";

  // baseline training
  int train_epochs = 200;
  double train_lr = 1e-3;

  CureConfig cure;  // seed is overwritten from the master seed

  // attack evaluation. eps: absolute (pixel units) when > 0, otherwise
  // eps_fraction of the data bounding-box diagonal (synthetic convention).
  double eps = 0.0;
  double eps_fraction = 0.05;
  int eval_points = 200;
  int pgd_steps = 20;
  std::vector<double> robustness_eps_factors = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
  int masking_points = 100;  // points for the pgd/spsa margin scatter

  // curvature probe. Same absolute-or-fraction convention as eps; the
  // fraction default mirrors h = 1.5 on the [0,255] pixel scale.
  double probe_h = 0.0;
  double probe_h_fraction = 1.5 / 255.0;
  int probe_points = 20;
  int probe_frobenius_samples = 20;

  // geometry export
  std::vector<int> surface_samples = {0};
  double surface_extent_eps = 10.0;  // half-extent, in eps units
  int surface_resolution = 201;
};

ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

struct StageRecord {
  std::string name;
  bool ok = false;
  double seconds = 0.0;
  std::string error;
};

struct ExperimentResult {
  std::filesystem::path out_dir;
  std::vector<StageRecord> stages;
  bool ok = false;
};

/// Executes train -> probe -> attack -> cure-finetune -> probe -> attack ->
/// export, writing CSVs, checkpoints and a manifest (config echo, stage
/// wall-times, content hash per output file). A stage failure halts the
/// pipeline; partial outputs and the failure record stay in the manifest.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace curvlab
