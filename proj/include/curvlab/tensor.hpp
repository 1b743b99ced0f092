#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "curvlab/error.hpp"

namespace curvlab {

/// Dense row-major tensor of 64-bit floats. Shapes are lists of positive
/// extents; a scalar is represented as shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t);
  static Tensor filled(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-d access; shape must be {rows, cols}.
  double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  double scalar_value() const;

  // Returns a tensor sharing no storage with this one but viewing the same
  // data under a new shape (element count must match).
  Tensor reshaped(std::vector<int> new_shape) const;

  void fill(double v);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int>& shape);

// Elementwise and reduction helpers shared across modules. All of them
// require matching shapes where applicable and never produce non-finite
// values from finite inputs except through ordinary IEEE arithmetic.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double a, const Tensor& t);

// y += a * x
void axpy(double a, const Tensor& x, Tensor& y);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double norm_inf(const Tensor& a);
double norm1(const Tensor& a);
Tensor sign(const Tensor& a);  // sign(0) = 0
void scale_inplace(Tensor& t, double a);

int argmax(const Tensor& v);

bool all_finite(const Tensor& t);
// Throws NonFiniteError naming `where` if t contains NaN/Inf.
void check_finite(const Tensor& t, std::string_view where);

}  // namespace curvlab
