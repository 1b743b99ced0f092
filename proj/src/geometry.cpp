#include "curvlab/geometry.hpp"

#include <cmath>

#include <json.hpp>

#include "curvlab/attacks.hpp"
#include "curvlab/error.hpp"
#include "curvlab/io.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {

void PlaneSpec::validate() const {
  if (center.empty()) throw ShapeError("plane: empty center");
  if (!center.same_shape(r_dir) || !center.same_shape(v_dir))
    throw ShapeError("plane: direction shapes do not match the center");
  if (std::abs(norm2(r_dir) - 1.0) > 1e-9 || std::abs(norm2(v_dir) - 1.0) > 1e-9)
    throw Error("plane: directions must be unit norm");
  if (n_r < 2 || n_v < 2) throw Error("plane: resolution must be >= 2 per axis");
  if (!(r_min < r_max) || !(v_min < v_max)) throw Error("plane: empty extent");
}

Tensor PlaneSpec::point(double a, double b) const {
  Tensor p = center;
  axpy(a, r_dir, p);
  axpy(b, v_dir, p);
  return p;
}

Tensor normal_direction(NetEval& eval, const Tensor& x) {
  DeepFoolResult df = deepfool(eval, x, "l2");
  double n = norm2(df.r);
  if (n == 0.0) throw Error("normal_direction: zero perturbation at a boundary point");
  return (1.0 / n) * df.r;
}

Tensor random_orthogonal_direction(const Tensor& r, std::uint64_t seed) {
  if (std::abs(norm2(r) - 1.0) > 1e-9) throw Error("random_orthogonal_direction: r must be unit");
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Tensor v = rng.normal_tensor(r.shape());
    axpy(-dot(v, r), r, v);
    double n = norm2(v);
    if (n >= 1e-12) {
      scale_inplace(v, 1.0 / n);
      return v;
    }
  }
  throw Error("random_orthogonal_direction: degenerate draws exhausted retries");
}

namespace {

double axis_value(double lo, double hi, int i, int n) {
  return lo + (hi - lo) * static_cast<double>(i) / (n - 1);
}

}  // namespace

BoundaryGrid boundary_cross_section(NetEval& eval, const PlaneSpec& plane, int true_label) {
  plane.validate();
  BoundaryGrid grid;
  grid.plane = plane;
  grid.true_label = true_label;
  grid.predicted.resize(static_cast<std::size_t>(plane.n_r) * plane.n_v);
  for (int i = 0; i < plane.n_r; ++i) {
    double a = axis_value(plane.r_min, plane.r_max, i, plane.n_r);
    for (int j = 0; j < plane.n_v; ++j) {
      double b = axis_value(plane.v_min, plane.v_max, j, plane.n_v);
      grid.predicted[static_cast<std::size_t>(i) * plane.n_v + j] =
          eval.predict(plane.point(a, b));
    }
  }
  return grid;
}

SurfaceGrid loss_surface(NetEval& eval, const PlaneSpec& plane, int true_label) {
  plane.validate();
  SurfaceGrid grid;
  grid.plane = plane;
  grid.true_label = true_label;
  grid.values = Tensor({plane.n_r, plane.n_v});
  for (int i = 0; i < plane.n_r; ++i) {
    double a = axis_value(plane.r_min, plane.r_max, i, plane.n_r);
    for (int j = 0; j < plane.n_v; ++j) {
      double b = axis_value(plane.v_min, plane.v_max, j, plane.n_v);
      grid.values.at(i, j) = -eval.loss(plane.point(a, b), true_label);
    }
  }
  return grid;
}

namespace {

void plane_header(CsvBuilder& csv, const PlaneSpec& p, int true_label, std::string_view kind) {
  csv.comment("kind", kind);
  csv.comment("true-label", static_cast<std::int64_t>(true_label));
  csv.comment("r-extent", format_double(p.r_min) + ".." + format_double(p.r_max));
  csv.comment("v-extent", format_double(p.v_min) + ".." + format_double(p.v_max));
  csv.comment("resolution", std::to_string(p.n_r) + "x" + std::to_string(p.n_v));
}

}  // namespace

std::string boundary_to_csv(const BoundaryGrid& grid) {
  CsvBuilder csv;
  plane_header(csv, grid.plane, grid.true_label, "boundary");
  csv.row("a", "b", "predicted", "correct");
  for (int i = 0; i < grid.plane.n_r; ++i) {
    double a = axis_value(grid.plane.r_min, grid.plane.r_max, i, grid.plane.n_r);
    for (int j = 0; j < grid.plane.n_v; ++j) {
      double b = axis_value(grid.plane.v_min, grid.plane.v_max, j, grid.plane.n_v);
      int pred = grid.at(i, j);
      csv.row(a, b, pred, static_cast<int>(pred == grid.true_label));
    }
  }
  return csv.str();
}

std::string surface_to_csv(const SurfaceGrid& grid) {
  CsvBuilder csv;
  plane_header(csv, grid.plane, grid.true_label, "surface");
  std::string line;
  for (int i = 0; i < grid.plane.n_r; ++i) {
    line.clear();
    for (int j = 0; j < grid.plane.n_v; ++j) {
      if (j) line += ',';
      line += format_double(grid.values.at(i, j));
    }
    csv.line(line);
  }
  return csv.str();
}

std::string plane_sidecar_json(const PlaneSpec& plane, int true_label, std::string_view kind) {
  nlohmann::json j;
  j["kind"] = std::string(kind);
  j["true-label"] = true_label;
  auto vec = [](const Tensor& t) {
    return std::vector<double>(t.data(), t.data() + t.size());
  };
  j["x"] = vec(plane.center);
  j["r"] = vec(plane.r_dir);
  j["v"] = vec(plane.v_dir);
  j["extent"] = {plane.r_min, plane.r_max, plane.v_min, plane.v_max};
  j["resolution"] = {plane.n_r, plane.n_v};
  return j.dump(2);
}

}  // namespace curvlab
