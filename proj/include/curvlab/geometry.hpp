#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvlab/network.hpp"
#include "curvlab/tensor.hpp"

namespace curvlab {

/// A 2-d slice of input space through `center`, spanned by two unit
/// directions (typically the boundary normal and a random orthogonal one).
struct PlaneSpec {
  Tensor center;
  Tensor r_dir;  // unit
  Tensor v_dir;  // unit
  double r_min = -1.0, r_max = 1.0;
  double v_min = -1.0, v_max = 1.0;
  int n_r = 201, n_v = 201;

  void validate() const;
  Tensor point(double a, double b) const;  // center + a r + b v
};

/// Boundary normal at x: the minimal l2 DeepFool perturbation, normalized.
Tensor normal_direction(NetEval& eval, const Tensor& x);

/// Gaussian draw orthogonalized against r and normalized; redraws on a
/// degenerate residual (bounded retries).
Tensor random_orthogonal_direction(const Tensor& r, std::uint64_t seed);

struct BoundaryGrid {
  PlaneSpec plane;
  int true_label = 0;
  std::vector<int> predicted;  // row-major over (r index, v index)

  int at(int i, int j) const { return predicted[static_cast<std::size_t>(i) * plane.n_v + j]; }
};

BoundaryGrid boundary_cross_section(NetEval& eval, const PlaneSpec& plane, int true_label);

struct SurfaceGrid {
  PlaneSpec plane;
  int true_label = 0;
  Tensor values;  // {n_r, n_v}, -loss at each grid point
};

SurfaceGrid loss_surface(NetEval& eval, const PlaneSpec& plane, int true_label);

/// Long-format CSV (a, b, predicted, correct) with a plane header.
std::string boundary_to_csv(const BoundaryGrid& grid);
/// Matrix CSV (rows = r axis) with a plane header.
std::string surface_to_csv(const SurfaceGrid& grid);
/// Replay sidecar: center, directions, extents, label.
std::string plane_sidecar_json(const PlaneSpec& plane, int true_label, std::string_view kind);

}  // namespace curvlab
