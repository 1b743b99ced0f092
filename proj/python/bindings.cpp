// _curvlab: thin numpy-facing wrapper over the C++ core. Exposes the main
// operations (training, attacks, curvature probes, quadratic-model bounds);
// orchestration stays on the C++ side behind run_experiment.

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "curvlab/attacks.hpp"
#include "curvlab/checkpoint.hpp"
#include "curvlab/cure.hpp"
#include "curvlab/curvature.hpp"
#include "curvlab/data.hpp"
#include "curvlab/error.hpp"
#include "curvlab/experiment.hpp"
#include "curvlab/network.hpp"
#include "curvlab/quadratic.hpp"
#include "curvlab/rng.hpp"

namespace py = pybind11;
using namespace curvlab;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = static_cast<int>(a.shape(i));
  if (shape.empty()) shape = {1};
  Tensor t(shape);
  std::memcpy(t.data(), a.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  return t;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
  return a;
}

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Dataset to_dataset(const Arr& X, const std::vector<int>& y, bool image_range) {
  if (X.ndim() != 2) throw std::invalid_argument("X must be 2-d (n, d)");
  if (static_cast<std::size_t>(X.shape(0)) != y.size())
    throw std::invalid_argument("X and y disagree on the sample count");
  Dataset d;
  d.range = image_range ? image_box() : unbounded_box();
  d.name = "ndarray";
  int classes = 0;
  for (py::ssize_t i = 0; i < X.shape(0); ++i) {
    Tensor x({static_cast<int>(X.shape(1))});
    std::memcpy(x.data(), X.data() + i * X.shape(1),
                sizeof(double) * static_cast<std::size_t>(X.shape(1)));
    d.inputs.push_back(std::move(x));
    d.labels.push_back(y[static_cast<std::size_t>(i)]);
    classes = std::max(classes, y[static_cast<std::size_t>(i)] + 1);
  }
  d.num_classes = std::max(classes, 2);
  return d;
}

py::dict dataset_to_py(const Dataset& d) {
  py::array_t<double> X({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim())});
  py::array_t<int> y(static_cast<py::ssize_t>(d.size()));
  for (int i = 0; i < d.size(); ++i) {
    std::memcpy(X.mutable_data() + static_cast<py::ssize_t>(i) * d.dim(), d.inputs[i].data(),
                sizeof(double) * static_cast<std::size_t>(d.dim()));
    y.mutable_at(i) = d.labels[i];
  }
  py::dict out;
  out["X"] = X;
  out["y"] = y;
  out["num_classes"] = d.num_classes;
  return out;
}

AttackSpec spec_from_kwargs(const std::string& family, double eps, int steps, double step_size,
                            std::uint64_t seed) {
  AttackSpec spec = make_spec(family, eps, seed);
  if (steps > 0) spec.steps = steps;
  if (step_size > 0) spec.step_size = step_size;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_curvlab, m) {
  m.doc() = "curvature laboratory core";

  py::register_exception<Error>(m, "CurvlabError");

  py::class_<Network>(m, "Network")
      .def_property_readonly("input_dim", &Network::input_dim)
      .def_property_readonly("num_classes", &Network::num_classes)
      .def_property_readonly("epoch", &Network::epoch)
      .def_property_readonly("param_count", &Network::param_count)
      .def("param_names", &Network::param_names)
      .def("param",
           [](const Network& n, const std::string& name) { return to_array(n.param(name)); })
      .def("__repr__", [](const Network& n) {
        return "<Network d=" + std::to_string(n.input_dim()) +
               " classes=" + std::to_string(n.num_classes()) + ">";
      });

  m.def("build_network",
        [](const std::string& name, int input_dim, int num_classes, std::uint64_t seed) {
          return build_network(named_layers(name, input_dim, num_classes), seed);
        },
        py::arg("name"), py::arg("input_dim"), py::arg("num_classes"), py::arg("seed") = 7);
  m.def("save_checkpoint",
        [](const Network& n, const std::string& path) { save_checkpoint(n, path); });
  m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });

  m.def("logits", [](const Network& n, const Arr& x) { return to_array(logits(n, to_tensor(x))); });
  m.def("predict", [](const Network& n, const Arr& x) {
    NetEval eval(n);
    return eval.predict(to_tensor(x));
  });
  m.def("loss", [](const Network& n, const Arr& x, int y) { return xent_loss(n, to_tensor(x), y); });
  m.def("input_gradient", [](const Network& n, const Arr& x, int y) {
    NetEval eval(n);
    return to_array(eval.input_gradient(to_tensor(x), y));
  });

  m.def("hvp",
        [](const Network& n, const Arr& x, int y, const Arr& z, double h) {
          NetEval eval(n);
          return to_array(hvp(eval, to_tensor(x), y, to_tensor(z), h));
        },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("z"), py::arg("h"));
  m.def("curvature_profile",
        [](const Network& n, const Arr& x, int y, double h) {
          NetEval eval(n);
          CurvatureProfile p = curvature_profile(eval, to_tensor(x), y, h);
          return py::array_t<double>(static_cast<py::ssize_t>(p.eigenvalues.size()),
                                     p.eigenvalues.data());
        },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("h"));
  m.def("frobenius_estimate",
        [](const Network& n, const Arr& x, int y, double h, int samples, std::uint64_t seed) {
          NetEval eval(n);
          return frobenius_estimate(eval, to_tensor(x), y, h, samples, seed);
        },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("h"), py::arg("samples") = 20,
        py::arg("seed") = 1);
  m.def("alignment",
        [](const Network& n, const Arr& x, int y, double h) {
          NetEval eval(n);
          return alignment(eval, to_tensor(x), y, h);
        },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("h"));

  m.def("gen_two_moons",
        [](int n, double noise, std::uint64_t seed) {
          return dataset_to_py(gen_two_moons(n, noise, seed));
        },
        py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 1);
  m.def("gen_gaussians",
        [](int n, int k, double spread, std::uint64_t seed) {
          return dataset_to_py(gen_gaussians(n, k, spread, seed));
        },
        py::arg("n"), py::arg("k") = 3, py::arg("spread") = 0.3, py::arg("seed") = 1);
  m.def("gen_spirals",
        [](int n, int turns, double noise, std::uint64_t seed) {
          return dataset_to_py(gen_spirals(n, turns, noise, seed));
        },
        py::arg("n"), py::arg("turns") = 2, py::arg("noise") = 0.1, py::arg("seed") = 1);

  m.def("train_baseline",
        [](const std::string& network, const Arr& X, const std::vector<int>& y, int epochs,
           double lr, std::uint64_t seed, bool image_range) {
          Dataset d = to_dataset(X, y, image_range);
          return train_baseline(named_layers(network, d.dim(), d.num_classes), d, epochs, lr,
                                seed);
        },
        py::arg("network"), py::arg("X"), py::arg("y"), py::arg("epochs") = 200,
        py::arg("lr") = 1e-3, py::arg("seed") = 1, py::arg("image_range") = false);

  m.def("finetune_cure",
        [](const Network& start, const Arr& X, const std::vector<int>& y, double gamma,
           double h_max, int epochs, int h_ramp_epochs, double lr_start, double lr_end,
           int batch_size, std::uint64_t seed, bool image_range) {
          Dataset d = to_dataset(X, y, image_range);
          CureConfig cfg;
          cfg.gamma = gamma;
          cfg.h_max = h_max;
          cfg.epochs = epochs;
          cfg.h_ramp_epochs = h_ramp_epochs;
          cfg.lr_start = lr_start;
          cfg.lr_end = lr_end;
          cfg.batch_size = batch_size;
          cfg.seed = seed;
          cfg.record_history = false;
          FinetuneResult r = finetune_cure(start, d, d, cfg, make_spec("pgd", 0.0));
          return r.net;
        },
        py::arg("net"), py::arg("X"), py::arg("y"), py::arg("gamma") = 4.0,
        py::arg("h_max") = 1.5, py::arg("epochs") = 20, py::arg("h_ramp_epochs") = 5,
        py::arg("lr_start") = 1e-4, py::arg("lr_end") = 1e-6, py::arg("batch_size") = 32,
        py::arg("seed") = 1, py::arg("image_range") = false);

  m.def("attack",
        [](const Network& n, const Arr& x, int y, const std::string& family, double eps,
           int steps, double step_size, std::uint64_t seed, bool image_range) {
          NetEval eval(n);
          AttackSpec spec = spec_from_kwargs(family, eps, steps, step_size, seed);
          Box box = image_range ? image_box() : unbounded_box();
          AttackResult r = run_attack(eval, to_tensor(x), y, spec, box);
          py::dict out;
          out["x_adv"] = to_array(r.x_adv);
          out["success"] = r.success;
          out["margin"] = r.margin;
          out["grad_queries"] = r.grad_queries;
          out["forward_queries"] = r.forward_queries;
          return out;
        },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("family") = "pgd",
        py::arg("eps") = 0.1, py::arg("steps") = 0, py::arg("step_size") = 0.0,
        py::arg("seed") = 1, py::arg("image_range") = false);

  m.def("adversarial_accuracy",
        [](const Network& n, const Arr& X, const std::vector<int>& y, const std::string& family,
           double eps, int steps, std::uint64_t seed, bool image_range) {
          Dataset d = to_dataset(X, y, image_range);
          NetEval eval(n);
          return adversarial_accuracy(eval, d, spec_from_kwargs(family, eps, steps, 0.0, seed));
        },
        py::arg("net"), py::arg("X"), py::arg("y"), py::arg("family") = "pgd",
        py::arg("eps") = 0.1, py::arg("steps") = 0, py::arg("seed") = 1,
        py::arg("image_range") = false);

  m.def("margin_loss", [](const Network& n, const Arr& x, int y) {
    NetEval eval(n);
    return margin_loss(eval, to_tensor(x), y);
  });

  m.def("exact_min_perturbation",
        [](const Arr& g, const Arr& H, double c) {
          QuadraticModel model{to_tensor(g), to_tensor(H), c};
          MinPerturbation r = exact_min_perturbation(model);
          py::dict out;
          out["r"] = to_array(r.r);
          out["norm"] = r.norm;
          out["multiplier"] = r.multiplier;
          out["hard_case"] = r.hard_case;
          return out;
        },
        py::arg("g"), py::arg("H"), py::arg("c"));
  m.def("robustness_bounds",
        [](const Arr& g, const Arr& H, double c) {
          QuadraticModel model{to_tensor(g), to_tensor(H), c};
          RobustnessBounds b = robustness_bounds(model);
          py::dict out;
          out["nu"] = b.nu;
          out["lower"] = b.lower;
          out["upper"] = b.upper;
          out["lower_simplified"] = b.lower_simplified;
          out["upper_simplified"] = b.upper_simplified;
          return out;
        },
        py::arg("g"), py::arg("H"), py::arg("c"));
  m.def("bound_formula", &bound_formula, py::arg("t"), py::arg("nu"), py::arg("c"));

  m.def("run_experiment",
        [](const std::string& config_json) {
          ExperimentResult r = run_experiment(parse_config(config_json));
          py::dict out;
          out["ok"] = r.ok;
          out["out_dir"] = r.out_dir.string();
          py::list stages;
          for (const auto& s : r.stages) {
            py::dict d;
            d["name"] = s.name;
            d["ok"] = s.ok;
            d["seconds"] = s.seconds;
            d["error"] = s.error;
            stages.append(d);
          }
          out["stages"] = stages;
          return out;
        },
        py::arg("config_json"));
}
