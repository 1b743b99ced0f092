#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curvlab/tensor.hpp"

namespace curvlab {

/// Per-coordinate valid range of a data domain. Image data is bounded to
/// [0, 255]; synthetic 2-d data is unbounded and attacks skip box clipping.
struct Box {
  bool bounded = false;
  double lo = 0.0;
  double hi = 0.0;

  double clamp(double v) const { return !bounded ? v : (v < lo ? lo : (v > hi ? hi : v)); }
  double range() const { return bounded ? hi - lo : 1.0; }
};

inline Box image_box() { return {true, 0.0, 255.0}; }
inline Box unbounded_box() { return {}; }

void clip_to_box(Tensor& x, const Box& box);

struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  Box range;
  std::string name;
  std::string split;
  int num_classes = 0;

  int size() const { return static_cast<int>(inputs.size()); }
  int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
  /// Diagonal of the axis-aligned bounding box of the inputs; the unit for
  /// fractional epsilon/h conventions on synthetic data.
  double bounding_diagonal() const;
  void validate() const;
};

/// Interleaved half-circle arcs with Gaussian noise; classes balanced to
/// within one point. noise=0 puts the points exactly on the arcs.
Dataset gen_two_moons(int n, double noise, std::uint64_t seed);
/// k Gaussian blobs with centers equally spaced on a circle of radius 2.
Dataset gen_gaussians(int n, int k, double spread, std::uint64_t seed);
/// Two interleaved spirals; `turns` controls the winding count.
Dataset gen_spirals(int n, int turns, double noise, std::uint64_t seed);

/// IDX ingestion (big-endian dims, u8 pixels). Images magic 0x00000803,
/// labels magic 0x00000801; the two files must agree on the item count.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
/// Writer counterpart (values rounded and clamped to u8); round-trips
/// byte-exactly for integral pixel values.
void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path, int rows, int cols);

Dataset subset(const Dataset& data, const std::vector<int>& indices);
/// First n_draw entries of a seeded shuffle of [0, n_total); ascending order.
std::vector<int> sample_indices(int n_total, int n_draw, std::uint64_t seed);
/// Deterministic head/tail split for synthetic data (inputs are already in
/// generation order; callers shuffle at training time).
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

}  // namespace curvlab
