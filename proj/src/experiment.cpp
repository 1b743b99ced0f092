#include "curvlab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include <json.hpp>

#include "curvlab/attacks.hpp"
#include "curvlab/checkpoint.hpp"
#include "curvlab/curvature.hpp"
#include "curvlab/error.hpp"
#include "curvlab/geometry.hpp"
#include "curvlab/io.hpp"

namespace curvlab {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j = json::parse(json_text);
  ExperimentConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "output", c.output);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    maybe(d, "kind", c.dataset_kind);
    maybe(d, "n", c.n);
    maybe(d, "noise", c.noise);
    maybe(d, "k", c.k);
    maybe(d, "spread", c.spread);
    maybe(d, "turns", c.turns);
    maybe(d, "test-fraction", c.test_fraction);
    maybe(d, "images", c.idx_images);
    maybe(d, "labels", c.idx_labels);
    maybe(d, "test-images", c.idx_test_images);
    maybe(d, "test-labels", c.idx_test_labels);
  }
  maybe(j, "network", c.network);
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "epochs", c.train_epochs);
    maybe(t, "lr", c.train_lr);
  }
  if (j.contains("cure")) {
    const json& q = j.at("cure");
    maybe(q, "gamma", c.cure.gamma);
    maybe(q, "gamma-schedule", c.cure.gamma_schedule);
    maybe(q, "h-max", c.cure.h_max);
    maybe(q, "h-ramp-epochs", c.cure.h_ramp_epochs);
    maybe(q, "epochs", c.cure.epochs);
    maybe(q, "lr-start", c.cure.lr_start);
    maybe(q, "lr-end", c.cure.lr_end);
    maybe(q, "batch-size", c.cure.batch_size);
    if (q.contains("eps-m") && q.at("eps-m").is_number()) c.cure.eps_m = q.at("eps-m").get<double>();
    maybe(q, "history-points", c.cure.history_points);
    maybe(q, "frobenius-samples", c.cure.frobenius_samples);
    maybe(q, "frobenius-points", c.cure.frobenius_points);
  }
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    maybe(a, "eps", c.eps);
    maybe(a, "eps-fraction", c.eps_fraction);
    maybe(a, "eval-points", c.eval_points);
    maybe(a, "pgd-steps", c.pgd_steps);
    maybe(a, "robustness-eps-factors", c.robustness_eps_factors);
    maybe(a, "masking-points", c.masking_points);
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    maybe(p, "h", c.probe_h);
    maybe(p, "h-fraction", c.probe_h_fraction);
    maybe(p, "points", c.probe_points);
    maybe(p, "frobenius-samples", c.probe_frobenius_samples);
  }
  if (j.contains("surface")) {
    const json& s = j.at("surface");
    maybe(s, "samples", c.surface_samples);
    maybe(s, "extent-eps", c.surface_extent_eps);
    maybe(s, "resolution", c.surface_resolution);
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output"] = c.output;
  json d;
  d["kind"] = c.dataset_kind;
  if (c.dataset_kind == "idx") {
    d["images"] = c.idx_images;
    d["labels"] = c.idx_labels;
    d["test-images"] = c.idx_test_images;
    d["test-labels"] = c.idx_test_labels;
  } else {
    d["n"] = c.n;
    d["test-fraction"] = c.test_fraction;
    if (c.dataset_kind == "two-moons") d["noise"] = c.noise;
    if (c.dataset_kind == "gaussians") {
      d["k"] = c.k;
      d["spread"] = c.spread;
    }
    if (c.dataset_kind == "spirals") {
      d["turns"] = c.turns;
      d["noise"] = c.noise;
    }
  }
  j["dataset"] = d;
  j["network"] = c.network;
  j["train"] = {{"epochs", c.train_epochs}, {"lr", c.train_lr}};
  json q;
  q["gamma"] = c.cure.gamma;
  if (!c.cure.gamma_schedule.empty()) q["gamma-schedule"] = c.cure.gamma_schedule;
  q["h-max"] = c.cure.h_max;
  q["h-ramp-epochs"] = c.cure.h_ramp_epochs;
  q["epochs"] = c.cure.epochs;
  q["lr-start"] = c.cure.lr_start;
  q["lr-end"] = c.cure.lr_end;
  q["batch-size"] = c.cure.batch_size;
  q["eps-m"] = c.cure.eps_m == 0.0 ? json("auto") : json(c.cure.eps_m);
  q["history-points"] = c.cure.history_points;
  q["frobenius-samples"] = c.cure.frobenius_samples;
  q["frobenius-points"] = c.cure.frobenius_points;
  j["cure"] = q;
  j["attack"] = {{"eps", c.eps},
                 {"eps-fraction", c.eps_fraction},
                 {"eval-points", c.eval_points},
                 {"pgd-steps", c.pgd_steps},
                 {"robustness-eps-factors", c.robustness_eps_factors},
                 {"masking-points", c.masking_points}};
  j["probe"] = {{"h", c.probe_h},
                {"h-fraction", c.probe_h_fraction},
                {"points", c.probe_points},
                {"frobenius-samples", c.probe_frobenius_samples}};
  j["surface"] = {{"samples", c.surface_samples},
                  {"extent-eps", c.surface_extent_eps},
                  {"resolution", c.surface_resolution}};
  return j.dump(2);
}

namespace {

struct Pipeline {
  const ExperimentConfig& cfg;
  std::filesystem::path out;
  json manifest_files = json::array();

  Dataset train_set, test_set;
  double eps_abs = 0.0;
  double h_abs = 0.0;
  Network baseline, cure_net;
  TrainingHistory cure_history;

  // accuracies for the gap table: [model][family]
  std::vector<std::string> gap_families{"fgsm", "deepfool-linf", "pgd-7", "pgd-20"};
  double gap_acc[2][4] = {};
  std::vector<std::pair<double, double>> robustness_rows[2];  // (eps, acc)
  double frob_mean[2] = {}, align_mean[2] = {};

  void emit(const std::string& name, const std::string& content) {
    std::filesystem::path p = out / name;
    write_text_file(p, content);
    manifest_files.push_back({{"name", name}, {"fnv1a", hex64(fnv1a_file(p))}});
  }
  void note_file(const std::string& name) {
    manifest_files.push_back({{"name", name}, {"fnv1a", hex64(fnv1a_file(out / name))}});
  }

  AttackSpec eval_spec(const std::string& family, double eps, std::uint64_t salt) const {
    AttackSpec s = make_spec(family, eps, Rng::derive(cfg.seed, salt));
    if (family == "pgd") s.steps = cfg.pgd_steps;
    return s;
  }

  Dataset eval_subset(int n_points, const char* tag) const {
    return subset(test_set, sample_indices(test_set.size(), n_points, Rng::derive(cfg.seed, tag)));
  }

  void stage_dataset() {
    if (cfg.dataset_kind == "idx") {
      train_set = load_idx(cfg.idx_images, cfg.idx_labels);
      test_set = cfg.idx_test_images.empty() ? train_set
                                             : load_idx(cfg.idx_test_images, cfg.idx_test_labels);
      train_set.split = "train";
      test_set.split = "test";
    } else {
      Dataset all;
      std::uint64_t ds_seed = Rng::derive(cfg.seed, "dataset");
      if (cfg.dataset_kind == "two-moons")
        all = gen_two_moons(cfg.n, cfg.noise, ds_seed);
      else if (cfg.dataset_kind == "gaussians")
        all = gen_gaussians(cfg.n, cfg.k, cfg.spread, ds_seed);
      else if (cfg.dataset_kind == "spirals")
        all = gen_spirals(cfg.n, cfg.turns, cfg.noise, ds_seed);
      else
        throw Error("unknown dataset kind '" + cfg.dataset_kind + "'");
      std::tie(train_set, test_set) = split_train_test(all, cfg.test_fraction, cfg.seed);
    }
    train_set.validate();
    test_set.validate();
    double diag = train_set.bounding_diagonal();
    eps_abs = cfg.eps > 0 ? cfg.eps : cfg.eps_fraction * diag;
    h_abs = cfg.probe_h > 0 ? cfg.probe_h : cfg.probe_h_fraction * diag;
  }

  void stage_train() {
    std::vector<LayerSpec> layers =
        named_layers(cfg.network, train_set.dim(), train_set.num_classes);
    baseline = train_baseline(layers, train_set, cfg.train_epochs, cfg.train_lr,
                              Rng::derive(cfg.seed, "train"));
    save_checkpoint(baseline, out / "baseline.ckpt");
    note_file("baseline.ckpt");
  }

  void stage_probe(int which, const Network& net, const std::string& name) {
    NetEval eval(net);
    std::uint64_t seed = Rng::derive(cfg.seed, "probe-" + name);
    CurvatureProfile prof = average_profile(eval, test_set, cfg.probe_points, h_abs, seed);
    emit("profile_" + name + ".csv", profile_to_csv(prof, cfg.probe_points, seed));

    std::vector<int> pts = sample_indices(test_set.size(), cfg.probe_points, seed);
    double frob = 0.0, align = 0.0;
    int align_n = 0;
    for (int i : pts) {
      const Tensor& x = test_set.inputs[static_cast<std::size_t>(i)];
      int y = test_set.labels[static_cast<std::size_t>(i)];
      frob += frobenius_estimate(eval, x, y, h_abs, cfg.probe_frobenius_samples,
                                 Rng::derive(seed, static_cast<std::uint64_t>(i)));
      if (norm2(eval.input_gradient(x, y)) > 0) {
        align += alignment(eval, x, y, h_abs);
        ++align_n;
      }
    }
    frob_mean[which] = pts.empty() ? 0.0 : frob / static_cast<double>(pts.size());
    align_mean[which] = align_n ? align / align_n : 0.0;
  }

  void stage_attack(int which, const Network& net, const std::string& name) {
    NetEval eval(net);
    Dataset sub = eval_subset(cfg.eval_points, "attack-subset");
    for (std::size_t f = 0; f < gap_families.size(); ++f) {
      std::string family = gap_families[f];
      AttackSpec spec;
      if (family == "pgd-7") {
        spec = eval_spec("pgd", eps_abs, 101);
        spec.steps = 7;
      } else if (family == "pgd-20") {
        spec = eval_spec("pgd", eps_abs, 102);
        spec.steps = 20;
      } else {
        spec = eval_spec(family, eps_abs, 100 + static_cast<std::uint64_t>(f));
      }
      AttackEvaluation ev = evaluate_attack(eval, sub, spec);
      gap_acc[which][f] = ev.adversarial_accuracy;
      if (family == "pgd-20")
        emit("attacks_" + name + "_pgd20.csv", evaluation_to_csv(ev));
    }
    for (double factor : cfg.robustness_eps_factors) {
      AttackSpec spec = eval_spec("pgd", factor * eps_abs, 120);
      spec.steps = cfg.pgd_steps;
      robustness_rows[which].emplace_back(factor * eps_abs,
                                          adversarial_accuracy(eval, sub, spec));
    }
  }

  void stage_cure() {
    CureConfig cc = cfg.cure;
    cc.seed = Rng::derive(cfg.seed, "cure");
    if (cc.h_max == 1.5 && !train_set.range.bounded) {
      // Synthetic data: rescale the pixel-unit default to the same
      // fraction of the data range.
      cc.h_max = 1.5 / 255.0 * train_set.bounding_diagonal();
    }
    AttackSpec hist_attack = eval_spec("pgd", eps_abs, 130);
    hist_attack.steps = cfg.pgd_steps;
    FinetuneResult res = finetune_cure(baseline, train_set, test_set, cc, hist_attack);
    cure_net = std::move(res.net);
    cure_history = std::move(res.history);
    save_checkpoint(cure_net, out / "cure.ckpt");
    note_file("cure.ckpt");
    emit("history.csv", history_to_csv(cure_history));
    emit("cure-config.json", cure_config_to_json(cc, hist_attack));
  }

  void stage_masking() {
    NetEval eval(cure_net);
    Dataset sub = eval_subset(cfg.masking_points, "masking-subset");
    AttackSpec pgd_spec = eval_spec("pgd", eps_abs, 140);
    pgd_spec.steps = 100;
    AttackSpec spsa_spec = eval_spec("spsa", eps_abs, 141);
    AttackEvaluation pv = evaluate_attack(eval, sub, pgd_spec);
    AttackEvaluation sv = evaluate_attack(eval, sub, spsa_spec);
    CsvBuilder csv;
    csv.comment("eps", eps_abs);
    csv.comment("pgd-steps", static_cast<std::int64_t>(pgd_spec.steps));
    csv.comment("spsa-steps", static_cast<std::int64_t>(spsa_spec.steps));
    csv.row("sample-id", "margin-pgd", "margin-spsa", "pgd-success", "spsa-success");
    for (std::size_t i = 0; i < pv.rows.size(); ++i)
      csv.row(pv.rows[i].sample_id, pv.rows[i].margin_adv, sv.rows[i].margin_adv,
              static_cast<int>(pv.rows[i].success), static_cast<int>(sv.rows[i].success));
    emit("margins_cure.csv", csv.str());
  }

  void stage_export() {
    CsvBuilder gap;
    gap.comment("eps", eps_abs);
    gap.comment("eval-points", static_cast<std::int64_t>(cfg.eval_points));
    gap.row("model", "fgsm", "deepfool-linf", "pgd-7", "pgd-20");
    gap.row("original", gap_acc[0][0], gap_acc[0][1], gap_acc[0][2], gap_acc[0][3]);
    gap.row("finetuned", gap_acc[1][0], gap_acc[1][1], gap_acc[1][2], gap_acc[1][3]);
    emit("attack_gap.csv", gap.str());

    CsvBuilder rob;
    rob.comment("attack", "pgd-" + std::to_string(cfg.pgd_steps));
    rob.row("eps", "original", "finetuned");
    for (std::size_t i = 0; i < robustness_rows[0].size(); ++i)
      rob.row(robustness_rows[0][i].first, robustness_rows[0][i].second,
              robustness_rows[1][i].second);
    emit("robustness_eps.csv", rob.str());

    CsvBuilder curv;
    curv.comment("h", h_abs);
    curv.row("model", "frobenius", "alignment");
    curv.row("original", frob_mean[0], align_mean[0]);
    curv.row("finetuned", frob_mean[1], align_mean[1]);
    emit("curvature_summary.csv", curv.str());

    for (int model = 0; model < 2; ++model) {
      const Network& net = model == 0 ? baseline : cure_net;
      std::string tag = model == 0 ? "baseline" : "cure";
      NetEval eval(net);
      for (int sid : cfg.surface_samples) {
        if (sid < 0 || sid >= test_set.size()) continue;
        const Tensor& x = test_set.inputs[static_cast<std::size_t>(sid)];
        int y = test_set.labels[static_cast<std::size_t>(sid)];
        PlaneSpec plane;
        plane.center = x;
        try {
          plane.r_dir = normal_direction(eval, x);
        } catch (const Error&) {
          continue;  // no boundary reachable (degenerate point); skip sample
        }
        plane.v_dir = random_orthogonal_direction(
            plane.r_dir, Rng::derive(cfg.seed, "surface-" + tag + "-" + std::to_string(sid)));
        double ext = cfg.surface_extent_eps * eps_abs;
        plane.r_min = -ext;
        plane.r_max = ext;
        plane.v_min = -ext;
        plane.v_max = ext;
        plane.n_r = plane.n_v = cfg.surface_resolution;
        std::string base = tag + "_" + std::to_string(sid);
        SurfaceGrid surf = loss_surface(eval, plane, y);
        emit(base + "_surface.csv", surface_to_csv(surf));
        emit(base + "_surface.json", plane_sidecar_json(plane, y, "surface"));
        BoundaryGrid bound = boundary_cross_section(eval, plane, y);
        emit(base + "_boundary.csv", boundary_to_csv(bound));
        emit(base + "_boundary.json", plane_sidecar_json(plane, y, "boundary"));
      }
    }
  }
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.out_dir = cfg.output;
  std::filesystem::create_directories(result.out_dir);

  Pipeline p{cfg, result.out_dir};
  write_text_file(result.out_dir / "config-echo.json", config_to_json(cfg));

  std::vector<std::pair<std::string, std::function<void()>>> stages = {
      {"dataset", [&] { p.stage_dataset(); }},
      {"train", [&] { p.stage_train(); }},
      {"probe-baseline", [&] { p.stage_probe(0, p.baseline, "baseline"); }},
      {"attack-baseline", [&] { p.stage_attack(0, p.baseline, "baseline"); }},
      {"cure-finetune", [&] { p.stage_cure(); }},
      {"probe-cure", [&] { p.stage_probe(1, p.cure_net, "cure"); }},
      {"attack-cure", [&] { p.stage_attack(1, p.cure_net, "cure"); }},
      {"masking-check", [&] { p.stage_masking(); }},
      {"export", [&] { p.stage_export(); }},
  };

  bool failed = false;
  for (auto& [name, fn] : stages) {
    StageRecord rec;
    rec.name = name;
    auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
      failed = true;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.stages.push_back(rec);
    if (failed) break;
  }
  result.ok = !failed;

  json manifest;
  manifest["config"] = json::parse(config_to_json(cfg));
  manifest["master-seed"] = cfg.seed;
  json stage_list = json::array();
  for (const StageRecord& s : result.stages) {
    json js = {{"name", s.name}, {"ok", s.ok}, {"seconds", s.seconds}};
    if (!s.error.empty()) js["error"] = s.error;
    stage_list.push_back(js);
  }
  manifest["stages"] = stage_list;
  manifest["files"] = p.manifest_files;
  manifest["ok"] = result.ok;
  write_text_file(result.out_dir / "manifest.json", manifest.dump(2));
  return result;
}

}  // namespace curvlab
