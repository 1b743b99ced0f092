#include "curvlab/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace curvlab {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor shape has non-positive extent " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

Tensor Tensor::filled(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ShapeError("scalar_value on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (shape_product(new_shape) != size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double a, const Tensor& t) {
  Tensor out = t;
  scale_inplace(out, a);
  return out;
}

void axpy(double a, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const Tensor& a) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
  return m;
}

double norm1(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += std::abs(a[i]);
  return s;
}

Tensor sign(const Tensor& a) {
  Tensor out = Tensor::zeros_like(a);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0) out[i] = 1.0;
    else if (a[i] < 0) out[i] = -1.0;
  }
  return out;
}

void scale_inplace(Tensor& t, double a) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] *= a;
}

int argmax(const Tensor& v) {
  int best = 0;
  for (std::int64_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

bool all_finite(const Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

void check_finite(const Tensor& t, std::string_view where) {
  if (!all_finite(t)) {
    throw NonFiniteError("non-finite value in " + std::string(where));
  }
}

}  // namespace curvlab
