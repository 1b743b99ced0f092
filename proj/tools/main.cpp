// curvlab command line. Subcommands: train, finetune-cure, attack,
// curvature, surface, theory, run. `run` executes a full JSON config;
// the other subcommands expose the individual stages for poking at
// checkpoints by hand.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curvlab/attacks.hpp"
#include "curvlab/checkpoint.hpp"
#include "curvlab/cure.hpp"
#include "curvlab/curvature.hpp"
#include "curvlab/data.hpp"
#include "curvlab/error.hpp"
#include "curvlab/experiment.hpp"
#include "curvlab/geometry.hpp"
#include "curvlab/io.hpp"
#include "curvlab/network.hpp"
#include "curvlab/quadratic.hpp"
#include "curvlab/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace curvlab;

namespace {

// Dataset flags shared by every stage subcommand.
struct DataOpts {
  std::string kind = "two-moons";
  int n = 600;
  double noise = 0.1;
  int k = 3;
  double spread = 0.3;
  int turns = 2;
  double test_fraction = 0.25;
  std::string images, labels, test_images, test_labels;

  void attach(CLI::App* app) {
    app->add_option("--dataset", kind, "two-moons | gaussians | spirals | idx");
    app->add_option("--n", n, "synthetic sample count");
    app->add_option("--noise", noise, "synthetic noise level");
    app->add_option("--k", k, "gaussian blob count");
    app->add_option("--spread", spread, "gaussian blob spread");
    app->add_option("--turns", turns, "spiral winding count");
    app->add_option("--test-fraction", test_fraction, "held-out fraction for synthetic data");
    app->add_option("--images", images, "IDX image file");
    app->add_option("--labels", labels, "IDX label file");
    app->add_option("--test-images", test_images, "IDX test image file");
    app->add_option("--test-labels", test_labels, "IDX test label file");
  }

  std::pair<Dataset, Dataset> build(std::uint64_t seed) const {
    if (kind == "idx") {
      Dataset train = load_idx(images, labels);
      train.split = "train";
      if (!test_images.empty()) {
        Dataset test = load_idx(test_images, test_labels);
        test.split = "test";
        return {std::move(train), std::move(test)};
      }
      return split_train_test(train, test_fraction, Rng::derive(seed, "train-test-split"));
    }
    Dataset data;
    std::uint64_t dseed = Rng::derive(seed, "dataset");
    if (kind == "two-moons")
      data = gen_two_moons(n, noise, dseed);
    else if (kind == "gaussians")
      data = gen_gaussians(n, k, spread, dseed);
    else if (kind == "spirals")
      data = gen_spirals(n, turns, noise, dseed);
    else
      throw Error("unknown dataset kind '" + kind + "'");
    return split_train_test(data, test_fraction, Rng::derive(seed, "train-test-split"));
  }
};

double resolve_scale(double absolute, double fraction, const Dataset& reference) {
  return absolute > 0.0 ? absolute : fraction * reference.bounding_diagonal();
}

double accuracy(NetEval& eval, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < data.size(); ++i)
    if (eval.predict(data.inputs[i]) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / data.size();
}

void cmd_train(const DataOpts& data_opts, const std::string& network, int epochs, double lr,
               std::uint64_t seed, const std::string& out) {
  auto [train, test] = data_opts.build(seed);
  auto layers = named_layers(network, train.dim(), train.num_classes);
  Network net = train_baseline(layers, train, epochs, lr, Rng::derive(seed, "train"));
  save_checkpoint(net, out);
  NetEval eval(net);
  std::printf("wrote %s  train-acc %.4f  test-acc %.4f\n", out.c_str(), accuracy(eval, train),
              accuracy(eval, test));
}

void cmd_finetune(const DataOpts& data_opts, const std::string& checkpoint, CureConfig cure,
                  double eps, double eps_fraction, std::uint64_t seed, const std::string& out,
                  const std::string& history_path) {
  auto [train, test] = data_opts.build(seed);
  Network start = load_checkpoint(checkpoint);
  cure.seed = Rng::derive(seed, "cure");
  double eps_abs = resolve_scale(eps, eps_fraction, train);
  AttackSpec history_attack = make_spec("pgd", eps_abs, Rng::derive(seed, "history-attack"));
  FinetuneResult result = finetune_cure(start, train, test.size() ? test : train, cure,
                                        history_attack);
  save_checkpoint(result.net, out);
  if (!history_path.empty()) write_text_file(history_path, history_to_csv(result.history));
  NetEval eval(result.net);
  std::printf("wrote %s  train-acc %.4f  test-acc %.4f\n", out.c_str(), accuracy(eval, train),
              accuracy(eval, test));
}

void cmd_attack(const DataOpts& data_opts, const std::string& checkpoint,
                const std::string& family, double eps, double eps_fraction, int steps,
                double step_size, int spsa_batch, int points, std::uint64_t seed,
                const std::string& out) {
  auto [train, test] = data_opts.build(seed);
  const Dataset& full = test.size() ? test : train;
  Dataset eval_set =
      points > 0 && points < full.size()
          ? subset(full, sample_indices(full.size(), points, Rng::derive(seed, "attack-subset")))
          : full;
  Network net = load_checkpoint(checkpoint);
  NetEval eval(net);
  AttackSpec spec = make_spec(family, resolve_scale(eps, eps_fraction, train),
                              Rng::derive(seed, "attack"));
  if (steps > 0) spec.steps = steps;
  if (step_size > 0) spec.step_size = step_size;
  spec.spsa_batch = spsa_batch;
  AttackEvaluation ev = evaluate_attack(eval, eval_set, spec);
  if (!out.empty()) write_text_file(out, evaluation_to_csv(ev));
  std::printf("%s eps=%s  clean-acc %.4f  adv-acc %.4f\n", family.c_str(),
              format_double(spec.epsilon).c_str(), ev.clean_accuracy, ev.adversarial_accuracy);
}

void cmd_curvature(const DataOpts& data_opts, const std::string& checkpoint, double h,
                   double h_fraction, int points, int frobenius_samples, std::uint64_t seed,
                   const std::string& out) {
  auto [train, test] = data_opts.build(seed);
  const Dataset& probe_set = test.size() ? test : train;
  Network net = load_checkpoint(checkpoint);
  NetEval eval(net);
  double h_abs = resolve_scale(h, h_fraction, train);
  CurvatureProfile profile =
      average_profile(eval, probe_set, points, h_abs, Rng::derive(seed, "probe"));
  if (!out.empty()) write_text_file(out, profile_to_csv(profile, points, seed));
  auto idx = sample_indices(probe_set.size(), std::min(points, probe_set.size()),
                            Rng::derive(seed, "probe"));
  double frob = 0.0, align = 0.0;
  int align_n = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& x = probe_set.inputs[idx[i]];
    int y = probe_set.labels[idx[i]];
    frob += frobenius_estimate(eval, x, y, h_abs, frobenius_samples,
                               Rng::derive(seed, "frobenius-" + std::to_string(i)));
    try {
      align += alignment(eval, x, y, h_abs);
      ++align_n;
    } catch (const Error&) {
      // zero-gradient point: no alignment defined
    }
  }
  std::printf("h %s  mean-frobenius %s  mean-alignment %s\n", format_double(h_abs).c_str(),
              format_double(idx.empty() ? 0.0 : frob / idx.size()).c_str(),
              format_double(align_n ? align / align_n : 0.0).c_str());
}

void cmd_surface(const DataOpts& data_opts, const std::string& checkpoint,
                 const std::vector<int>& samples, double eps, double eps_fraction, double extent,
                 int resolution, std::uint64_t seed, const std::string& out_dir,
                 const std::string& tag) {
  auto [train, test] = data_opts.build(seed);
  const Dataset& pool = test.size() ? test : train;
  Network net = load_checkpoint(checkpoint);
  NetEval eval(net);
  double eps_abs = resolve_scale(eps, eps_fraction, train);
  fs::create_directories(out_dir);
  for (int sid : samples) {
    if (sid < 0 || sid >= pool.size())
      throw Error("sample index " + std::to_string(sid) + " outside dataset of size " +
                  std::to_string(pool.size()));
    const Tensor& x = pool.inputs[sid];
    int y = pool.labels[sid];
    Tensor r = normal_direction(eval, x);
    Tensor v = random_orthogonal_direction(r, Rng::derive(seed, "surface-" + std::to_string(sid)));
    PlaneSpec plane{x, r, v, -extent * eps_abs, extent * eps_abs, -extent * eps_abs,
                    extent * eps_abs, resolution, resolution};
    std::string stem = tag + "_" + std::to_string(sid);
    BoundaryGrid boundary = boundary_cross_section(eval, plane, y);
    write_text_file(fs::path(out_dir) / (stem + "_boundary.csv"), boundary_to_csv(boundary));
    write_text_file(fs::path(out_dir) / (stem + "_boundary.json"),
                    plane_sidecar_json(plane, y, "boundary"));
    SurfaceGrid surface = loss_surface(eval, plane, y);
    write_text_file(fs::path(out_dir) / (stem + "_surface.csv"), surface_to_csv(surface));
    write_text_file(fs::path(out_dir) / (stem + "_surface.json"),
                    plane_sidecar_json(plane, y, "surface"));
    std::printf("wrote %s_{boundary,surface}.{csv,json} in %s\n", stem.c_str(), out_dir.c_str());
  }
}

void cmd_theory_curve(double gnorm, double c, double gtu, double nu_min, double nu_max, int steps,
                      const std::string& out) {
  std::vector<double> grid;
  for (int i = 0; i < steps; ++i)
    grid.push_back(nu_min + (nu_max - nu_min) * i / (steps - 1));
  auto rows = bound_curve(gnorm, c, gtu, grid);
  std::string csv = bound_curve_to_csv(rows, gnorm, c, gtu);
  if (out.empty())
    std::fputs(csv.c_str(), stdout);
  else
    write_text_file(out, csv);
}

void cmd_theory_sweep(int models, std::uint64_t seed, int max_dumps, const std::string& out) {
  SweepResult result = sandwich_sweep(models, seed, max_dumps);
  json j;
  j["models"] = result.models;
  j["violations"] = result.violations;
  j["counterexamples"] = json::array();
  for (const auto& dump : result.counterexamples) j["counterexamples"].push_back(json::parse(dump));
  if (!out.empty()) write_text_file(out, j.dump(2) + "\n");
  std::printf("%d models, %d violations\n", result.models, result.violations);
  if (result.violations > 0) std::exit(1);
}

void cmd_theory_solve(const std::string& model_path) {
  QuadraticModel m = model_from_json(read_text_file(model_path));
  MinPerturbation exact = exact_min_perturbation(m);
  RobustnessBounds bounds = robustness_bounds(m);
  json j;
  j["exact-norm"] = exact.norm;
  j["multiplier"] = exact.multiplier;
  j["hard-case"] = exact.hard_case;
  j["lower"] = bounds.lower;
  j["upper"] = bounds.upper;
  j["lower-simplified"] = bounds.lower_simplified;
  j["upper-simplified"] = bounds.upper_simplified;
  j["nu"] = bounds.nu;
  std::printf("%s\n", j.dump(2).c_str());
}

// `run` merge rule: flags fill in config keys they name, but an explicit
// key in the config file wins over the flag, with a warning.
struct MirrorFlag {
  CLI::Option* opt = nullptr;
  std::string pointer;                     // JSON pointer into the config
  std::function<json()> value;
};

void cmd_run(const std::string& config_path, const std::vector<MirrorFlag>& mirrors) {
  json j = config_path.empty() ? json::object() : json::parse(read_text_file(config_path));
  for (const auto& m : mirrors) {
    if (!m.opt || m.opt->count() == 0) continue;
    json::json_pointer ptr(m.pointer);
    if (j.contains(ptr))
      std::fprintf(stderr, "warning: %s set on the command line, but the config file "
                           "already sets %s; the config file wins\n",
                   m.opt->get_name().c_str(), m.pointer.c_str());
    else
      j[ptr] = m.value();
  }
  ExperimentConfig cfg = parse_config(j.dump());
  ExperimentResult result = run_experiment(cfg);
  for (const auto& stage : result.stages)
    std::printf("%-16s %s  %.2fs%s%s\n", stage.name.c_str(), stage.ok ? "ok" : "FAILED",
                stage.seconds, stage.error.empty() ? "" : "  ", stage.error.c_str());
  std::printf("outputs in %s\n", result.out_dir.string().c_str());
  if (!result.ok) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvature laboratory for small classifiers"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;

  // train
  auto* train_cmd = app.add_subcommand("train", "train a baseline classifier");
  DataOpts train_data;
  train_data.attach(train_cmd);
  std::string train_network = "mlp-2d", train_out = "baseline.ckpt";
  int train_epochs = 200;
  double train_lr = 1e-3;
  train_cmd->add_option("--network", train_network, "mlp-2d | mlp-img | convnet-img");
  train_cmd->add_option("--epochs", train_epochs);
  train_cmd->add_option("--lr", train_lr);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--out", train_out, "checkpoint path");

  // finetune-cure
  auto* cure_cmd = app.add_subcommand("finetune-cure", "curvature-regularized fine-tuning");
  DataOpts cure_data;
  cure_data.attach(cure_cmd);
  std::string cure_checkpoint, cure_out = "cure.ckpt", cure_history;
  CureConfig cure_cfg;
  double cure_eps = 0.0, cure_eps_fraction = 0.05;
  cure_cmd->add_option("--checkpoint", cure_checkpoint, "starting checkpoint")->required();
  cure_cmd->add_option("--gamma", cure_cfg.gamma, "penalty weight");
  cure_cmd->add_option("--gamma-schedule", cure_cfg.gamma_schedule,
                       "per-epoch gamma values (last value holds)");
  cure_cmd->add_option("--h-max", cure_cfg.h_max, "finite-difference scale after the ramp");
  cure_cmd->add_option("--h-ramp-epochs", cure_cfg.h_ramp_epochs);
  cure_cmd->add_option("--epochs", cure_cfg.epochs);
  cure_cmd->add_option("--lr-start", cure_cfg.lr_start);
  cure_cmd->add_option("--lr-end", cure_cfg.lr_end);
  cure_cmd->add_option("--batch-size", cure_cfg.batch_size);
  cure_cmd->add_option("--eps-m", cure_cfg.eps_m, "mixed-difference step (0 = auto)");
  cure_cmd->add_option("--history-points", cure_cfg.history_points);
  cure_cmd->add_option("--eps", cure_eps, "history attack budget (absolute)");
  cure_cmd->add_option("--eps-fraction", cure_eps_fraction,
                       "history attack budget as a fraction of the data diagonal");
  cure_cmd->add_option("--seed", seed);
  cure_cmd->add_option("--out", cure_out, "checkpoint path");
  cure_cmd->add_option("--history", cure_history, "per-epoch statistics CSV");

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "adversarial evaluation");
  DataOpts attack_data;
  attack_data.attach(attack_cmd);
  std::string attack_checkpoint, attack_family = "pgd", attack_out;
  double attack_eps = 0.0, attack_eps_fraction = 0.05, attack_step_size = 0.0;
  int attack_steps = 0, attack_spsa_batch = 128, attack_points = 0;
  attack_cmd->add_option("--checkpoint", attack_checkpoint)->required();
  attack_cmd->add_option("--family", attack_family,
                         "fgsm | pgd | deepfool-l2 | deepfool-linf | spsa");
  attack_cmd->add_option("--eps", attack_eps, "l-inf budget (absolute)");
  attack_cmd->add_option("--eps-fraction", attack_eps_fraction,
                         "budget as a fraction of the data diagonal");
  attack_cmd->add_option("--steps", attack_steps, "iterations (0 = family default)");
  attack_cmd->add_option("--step-size", attack_step_size, "0 = family default");
  attack_cmd->add_option("--spsa-batch", attack_spsa_batch);
  attack_cmd->add_option("--points", attack_points, "evaluation subset size (0 = all)");
  attack_cmd->add_option("--seed", seed);
  attack_cmd->add_option("--out", attack_out, "per-sample CSV");

  // curvature
  auto* curv_cmd = app.add_subcommand("curvature", "input-space curvature probe");
  DataOpts curv_data;
  curv_data.attach(curv_cmd);
  std::string curv_checkpoint, curv_out;
  double curv_h = 0.0, curv_h_fraction = 1.5 / 255.0;
  int curv_points = 20, curv_frobenius_samples = 20;
  curv_cmd->add_option("--checkpoint", curv_checkpoint)->required();
  curv_cmd->add_option("--h", curv_h, "finite-difference scale (absolute)");
  curv_cmd->add_option("--h-fraction", curv_h_fraction,
                       "scale as a fraction of the data diagonal");
  curv_cmd->add_option("--points", curv_points, "probe points");
  curv_cmd->add_option("--frobenius-samples", curv_frobenius_samples);
  curv_cmd->add_option("--seed", seed);
  curv_cmd->add_option("--out", curv_out, "mean profile CSV");

  // surface
  auto* surf_cmd = app.add_subcommand("surface", "decision boundary and loss surface grids");
  DataOpts surf_data;
  surf_data.attach(surf_cmd);
  std::string surf_checkpoint, surf_out_dir = ".", surf_tag = "surface";
  std::vector<int> surf_samples = {0};
  double surf_eps = 0.0, surf_eps_fraction = 0.05, surf_extent = 10.0;
  int surf_resolution = 201;
  surf_cmd->add_option("--checkpoint", surf_checkpoint)->required();
  surf_cmd->add_option("--sample", surf_samples, "sample indices");
  surf_cmd->add_option("--eps", surf_eps, "epsilon unit (absolute)");
  surf_cmd->add_option("--eps-fraction", surf_eps_fraction);
  surf_cmd->add_option("--extent", surf_extent, "half-extent in epsilon units");
  surf_cmd->add_option("--resolution", surf_resolution);
  surf_cmd->add_option("--seed", seed);
  surf_cmd->add_option("--out-dir", surf_out_dir);
  surf_cmd->add_option("--tag", surf_tag, "output file prefix");

  // theory
  auto* theory_cmd = app.add_subcommand("theory", "quadratic-model bounds");
  theory_cmd->require_subcommand(1);
  auto* curve_cmd = theory_cmd->add_subcommand("curve", "bounds as a function of curvature");
  double th_gnorm = 1.0, th_c = 1.0, th_gtu = 0.5, th_nu_min = 0.0, th_nu_max = 5.0;
  int th_steps = 201;
  std::string th_curve_out;
  curve_cmd->add_option("--gnorm", th_gnorm, "gradient norm");
  curve_cmd->add_option("--c", th_c, "required loss increase");
  curve_cmd->add_option("--gtu", th_gtu, "gradient-eigenvector overlap |g.u|");
  curve_cmd->add_option("--nu-min", th_nu_min);
  curve_cmd->add_option("--nu-max", th_nu_max);
  curve_cmd->add_option("--steps", th_steps);
  curve_cmd->add_option("--out", th_curve_out, "CSV path (default stdout)");
  auto* sweep_cmd = theory_cmd->add_subcommand("sweep", "random-model sandwich check");
  int th_models = 10000, th_dumps = 5;
  std::string th_sweep_out;
  sweep_cmd->add_option("--models", th_models);
  sweep_cmd->add_option("--seed", seed);
  sweep_cmd->add_option("--max-dumps", th_dumps, "counterexamples kept in the report");
  sweep_cmd->add_option("--out", th_sweep_out, "JSON report path");
  auto* solve_cmd = theory_cmd->add_subcommand("solve", "exact norm and bounds for one model");
  std::string th_model_path;
  solve_cmd->add_option("--model", th_model_path, "model JSON (keys d, c, g, H)")->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "full experiment from a JSON config");
  std::string run_config, run_output;
  std::string run_dataset, run_network;
  std::uint64_t run_seed = 1;
  int run_n = 600, run_train_epochs = 200, run_cure_epochs = 20, run_eval_points = 200;
  double run_noise = 0.1, run_gamma = 4.0, run_h_max = 1.5, run_eps = 0.0,
         run_eps_fraction = 0.05;
  std::vector<MirrorFlag> mirrors;
  run_cmd->add_option("--config", run_config, "JSON config path");
  auto mirror = [&mirrors](CLI::Option* opt, std::string pointer, std::function<json()> value) {
    mirrors.push_back({opt, std::move(pointer), std::move(value)});
  };
  mirror(run_cmd->add_option("--seed", run_seed, "master seed"), "/seed",
         [&] { return json(run_seed); });
  mirror(run_cmd->add_option("--output", run_output, "output directory"), "/output",
         [&] { return json(run_output); });
  mirror(run_cmd->add_option("--dataset", run_dataset), "/dataset/kind",
         [&] { return json(run_dataset); });
  mirror(run_cmd->add_option("--n", run_n), "/dataset/n", [&] { return json(run_n); });
  mirror(run_cmd->add_option("--noise", run_noise), "/dataset/noise",
         [&] { return json(run_noise); });
  mirror(run_cmd->add_option("--network", run_network), "/network",
         [&] { return json(run_network); });
  mirror(run_cmd->add_option("--train-epochs", run_train_epochs), "/train/epochs",
         [&] { return json(run_train_epochs); });
  mirror(run_cmd->add_option("--cure-epochs", run_cure_epochs), "/cure/epochs",
         [&] { return json(run_cure_epochs); });
  mirror(run_cmd->add_option("--gamma", run_gamma), "/cure/gamma",
         [&] { return json(run_gamma); });
  mirror(run_cmd->add_option("--h-max", run_h_max), "/cure/h-max",
         [&] { return json(run_h_max); });
  mirror(run_cmd->add_option("--eps", run_eps), "/attack/eps", [&] { return json(run_eps); });
  mirror(run_cmd->add_option("--eps-fraction", run_eps_fraction), "/attack/eps-fraction",
         [&] { return json(run_eps_fraction); });
  mirror(run_cmd->add_option("--eval-points", run_eval_points), "/attack/eval-points",
         [&] { return json(run_eval_points); });

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed())
      cmd_train(train_data, train_network, train_epochs, train_lr, seed, train_out);
    else if (cure_cmd->parsed())
      cmd_finetune(cure_data, cure_checkpoint, cure_cfg, cure_eps, cure_eps_fraction, seed,
                   cure_out, cure_history);
    else if (attack_cmd->parsed())
      cmd_attack(attack_data, attack_checkpoint, attack_family, attack_eps, attack_eps_fraction,
                 attack_steps, attack_step_size, attack_spsa_batch, attack_points, seed,
                 attack_out);
    else if (curv_cmd->parsed())
      cmd_curvature(curv_data, curv_checkpoint, curv_h, curv_h_fraction, curv_points,
                    curv_frobenius_samples, seed, curv_out);
    else if (surf_cmd->parsed())
      cmd_surface(surf_data, surf_checkpoint, surf_samples, surf_eps, surf_eps_fraction,
                  surf_extent, surf_resolution, seed, surf_out_dir, surf_tag);
    else if (theory_cmd->parsed()) {
      if (curve_cmd->parsed())
        cmd_theory_curve(th_gnorm, th_c, th_gtu, th_nu_min, th_nu_max, th_steps, th_curve_out);
      else if (sweep_cmd->parsed())
        cmd_theory_sweep(th_models, seed, th_dumps, th_sweep_out);
      else if (solve_cmd->parsed())
        cmd_theory_solve(th_model_path);
    } else if (run_cmd->parsed())
      cmd_run(run_config, mirrors);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
