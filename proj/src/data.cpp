#include "curvlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "curvlab/error.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {

void clip_to_box(Tensor& x, const Box& box) {
  if (!box.bounded) return;
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = box.clamp(x[i]);
}

double Dataset::bounding_diagonal() const {
  if (inputs.empty()) return 0.0;
  int d = dim();
  std::vector<double> lo(static_cast<std::size_t>(d), 0.0), hi(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) lo[static_cast<std::size_t>(j)] = hi[static_cast<std::size_t>(j)] = inputs[0][j];
  for (const Tensor& x : inputs)
    for (int j = 0; j < d; ++j) {
      lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], x[j]);
      hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], x[j]);
    }
  double s = 0.0;
  for (int j = 0; j < d; ++j) {
    double r = hi[static_cast<std::size_t>(j)] - lo[static_cast<std::size_t>(j)];
    s += r * r;
  }
  return std::sqrt(s);
}

void Dataset::validate() const {
  if (inputs.size() != labels.size())
    throw ShapeError("dataset " + name + ": " + std::to_string(inputs.size()) + " inputs vs " +
                     std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw Error("dataset " + name + ": label " + std::to_string(labels[i]) + " at sample " +
                  std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    if (range.bounded)
      for (std::int64_t j = 0; j < inputs[i].size(); ++j)
        if (inputs[i][j] < range.lo || inputs[i][j] > range.hi)
          throw Error("dataset " + name + ": sample " + std::to_string(i) +
                      " outside declared range");
  }
}

Dataset gen_two_moons(int n, double noise, std::uint64_t seed) {
  if (n < 2) throw Error("two-moons: need at least 2 points");
  if (noise < 0) throw Error("two-moons: negative noise");
  Rng rng(seed);
  Dataset d;
  d.name = "two-moons";
  d.num_classes = 2;
  int n0 = (n + 1) / 2, n1 = n / 2;
  // Outer arc: (cos t, sin t), t in [0, pi]. Inner arc: mirrored and
  // shifted to interleave: (1 - cos t, 0.5 - sin t).
  for (int i = 0; i < n0; ++i) {
    double t = n0 == 1 ? 0.0 : M_PI * i / (n0 - 1);
    Tensor x({2}, {std::cos(t), std::sin(t)});
    x[0] += noise * rng.normal();
    x[1] += noise * rng.normal();
    d.inputs.push_back(std::move(x));
    d.labels.push_back(0);
  }
  for (int i = 0; i < n1; ++i) {
    double t = n1 == 1 ? 0.0 : M_PI * i / (n1 - 1);
    Tensor x({2}, {1.0 - std::cos(t), 0.5 - std::sin(t)});
    x[0] += noise * rng.normal();
    x[1] += noise * rng.normal();
    d.inputs.push_back(std::move(x));
    d.labels.push_back(1);
  }
  return d;
}

Dataset gen_gaussians(int n, int k, double spread, std::uint64_t seed) {
  if (n < 2 || k < 2) throw Error("gaussians: need n >= 2 and k >= 2");
  if (spread < 0) throw Error("gaussians: negative spread");
  Rng rng(seed);
  Dataset d;
  d.name = "gaussians";
  d.num_classes = k;
  for (int c = 0; c < k; ++c) {
    int nc = n / k + (c < n % k ? 1 : 0);
    double ang = 2.0 * M_PI * c / k;
    double cx = 2.0 * std::cos(ang), cy = 2.0 * std::sin(ang);
    for (int i = 0; i < nc; ++i) {
      d.inputs.push_back(Tensor({2}, {cx + spread * rng.normal(), cy + spread * rng.normal()}));
      d.labels.push_back(c);
    }
  }
  return d;
}

Dataset gen_spirals(int n, int turns, double noise, std::uint64_t seed) {
  if (n < 2 || turns < 1) throw Error("spirals: need n >= 2 and turns >= 1");
  if (noise < 0) throw Error("spirals: negative noise");
  Rng rng(seed);
  Dataset d;
  d.name = "spirals";
  d.num_classes = 2;
  for (int c = 0; c < 2; ++c) {
    int nc = c == 0 ? (n + 1) / 2 : n / 2;
    for (int i = 0; i < nc; ++i) {
      double t = nc == 1 ? 0.5 : static_cast<double>(i) / (nc - 1);
      double radius = 0.2 + 1.8 * t;
      double ang = turns * 2.0 * M_PI * t + c * M_PI;
      d.inputs.push_back(Tensor({2}, {radius * std::cos(ang) + noise * rng.normal(),
                                      radius * std::sin(ang) + noise * rng.normal()}));
      d.labels.push_back(c);
    }
  }
  return d;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::filesystem::path& p, const char* what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4) throw IoError(p.string() + ": truncated while reading " + what);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path.string());
  if (std::uint32_t magic = read_be32(img, images_path, "magic"); magic != 0x00000803u)
    throw IoError(images_path.string() + ": bad magic " + std::to_string(magic) +
                  ", expected IDX image file (0x00000803)");
  std::uint32_t count = read_be32(img, images_path, "count");
  std::uint32_t rows = read_be32(img, images_path, "rows");
  std::uint32_t cols = read_be32(img, images_path, "cols");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path.string());
  if (std::uint32_t magic = read_be32(lab, labels_path, "magic"); magic != 0x00000801u)
    throw IoError(labels_path.string() + ": bad magic " + std::to_string(magic) +
                  ", expected IDX label file (0x00000801)");
  std::uint32_t lab_count = read_be32(lab, labels_path, "count");
  if (lab_count != count)
    throw IoError("IDX count mismatch: " + images_path.string() + " has " + std::to_string(count) +
                  " images, " + labels_path.string() + " has " + std::to_string(lab_count) +
                  " labels");

  Dataset d;
  d.name = images_path.filename().string();
  d.range = image_box();
  std::size_t pix = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(pix);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
    if (static_cast<std::size_t>(img.gcount()) != pix)
      throw IoError(images_path.string() + ": truncated at image " + std::to_string(i));
    Tensor x({static_cast<int>(pix)});
    for (std::size_t j = 0; j < pix; ++j) x[static_cast<std::int64_t>(j)] = buf[j];
    d.inputs.push_back(std::move(x));
    char lc;
    lab.read(&lc, 1);
    if (lab.gcount() != 1) throw IoError(labels_path.string() + ": truncated at label " + std::to_string(i));
    int label = static_cast<unsigned char>(lc);
    max_label = std::max(max_label, label);
    d.labels.push_back(label);
  }
  d.num_classes = max_label + 1;
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path, int rows, int cols) {
  if (data.dim() != rows * cols)
    throw ShapeError("save_idx: dataset dim " + std::to_string(data.dim()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path.string() + " for writing");
  write_be32(img, 0x00000803u);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (const Tensor& x : data.inputs)
    for (std::int64_t j = 0; j < x.size(); ++j) {
      double v = std::lround(x[j]);
      unsigned char b = static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v));
      img.write(reinterpret_cast<char*>(&b), 1);
    }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path.string() + " for writing");
  write_be32(lab, 0x00000801u);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) {
    unsigned char b = static_cast<unsigned char>(y);
    lab.write(reinterpret_cast<char*>(&b), 1);
  }
}

Dataset subset(const Dataset& data, const std::vector<int>& indices) {
  Dataset out;
  out.range = data.range;
  out.name = data.name;
  out.split = data.split;
  out.num_classes = data.num_classes;
  for (int i : indices) {
    if (i < 0 || i >= data.size())
      throw Error("subset: index " + std::to_string(i) + " out of range");
    out.inputs.push_back(data.inputs[static_cast<std::size_t>(i)]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<int> sample_indices(int n_total, int n_draw, std::uint64_t seed) {
  if (n_draw > n_total) n_draw = n_total;
  std::vector<int> idx(static_cast<std::size_t>(n_total));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(n_draw));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
  if (test_fraction < 0 || test_fraction >= 1)
    throw Error("split: test fraction must be in [0, 1)");
  int n = data.size();
  int n_test = static_cast<int>(std::lround(test_fraction * n));
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::derive(seed, "train-test-split"));
  rng.shuffle(idx);
  std::vector<int> test_idx(idx.begin(), idx.begin() + n_test);
  std::vector<int> train_idx(idx.begin() + n_test, idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  Dataset train = subset(data, train_idx);
  Dataset test = subset(data, test_idx);
  train.split = "train";
  test.split = "test";
  return {std::move(train), std::move(test)};
}

}  // namespace curvlab
