#include "curvlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace curvlab::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConst: return "const";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kScale: return "scale";
    case Op::kDot: return "dot";
    case Op::kRelu: return "relu";
    case Op::kConv2d: return "conv2d";
    case Op::kMaxPool2d: return "maxpool2d";
    case Op::kFlatten: return "flatten";
    case Op::kXentHead: return "xent_head";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

int Graph::add_node(Node n, std::vector<int> shape) {
  nodes_.push_back(std::move(n));
  shapes_.push_back(std::move(shape));
  bound_.push_back(nullptr);
  grads_.emplace_back();
  grad_set_.push_back(0);
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(std::string name, std::vector<int> shape) {
  Node n;
  n.op = Op::kInput;
  n.name = name;
  const int id = add_node(std::move(n), std::move(shape));
  by_name_[nodes_[static_cast<std::size_t>(id)].name] = id;
  return id;
}

int Graph::param(std::string name, std::vector<int> shape) {
  Node n;
  n.op = Op::kParam;
  n.name = name;
  const int id = add_node(std::move(n), std::move(shape));
  by_name_[nodes_[static_cast<std::size_t>(id)].name] = id;
  return id;
}

int Graph::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  std::vector<int> shape = v.shape();
  n.value = std::move(v);
  return add_node(std::move(n), std::move(shape));
}

int Graph::matmul(int a, int b) {
  const auto& sa = shape_of(a);
  const auto& sb = shape_of(b);
  if (sa.size() != 2) shape_fail(Op::kMatMul, "left operand must be 2-d, got " + shape_to_string(sa));
  if (sb.size() == 1) {
    if (sa[1] != sb[0]) {
      shape_fail(Op::kMatMul, "inner dimensions differ: " + shape_to_string(sa) + " * " + shape_to_string(sb));
    }
    Node n;
    n.op = Op::kMatMul;
    n.args = {a, b, -1};
    n.nargs = 2;
    return add_node(std::move(n), {sa[0]});
  }
  if (sb.size() != 2 || sa[1] != sb[0]) {
    shape_fail(Op::kMatMul, "inner dimensions differ: " + shape_to_string(sa) + " * " + shape_to_string(sb));
  }
  Node n;
  n.op = Op::kMatMul;
  n.args = {a, b, -1};
  n.nargs = 2;
  return add_node(std::move(n), {sa[0], sb[1]});
}

int Graph::add(int a, int b) {
  if (shape_of(a) != shape_of(b)) {
    shape_fail(Op::kAdd, "shape mismatch " + shape_to_string(shape_of(a)) + " vs " +
                             shape_to_string(shape_of(b)));
  }
  Node n;
  n.op = Op::kAdd;
  n.args = {a, b, -1};
  n.nargs = 2;
  return add_node(std::move(n), shape_of(a));
}

int Graph::scale(double alpha, int a) {
  Node n;
  n.op = Op::kScale;
  n.alpha = alpha;
  n.args = {a, -1, -1};
  n.nargs = 1;
  return add_node(std::move(n), shape_of(a));
}

int Graph::dot(int a, int b) {
  if (shape_of(a) != shape_of(b)) {
    shape_fail(Op::kDot, "shape mismatch " + shape_to_string(shape_of(a)) + " vs " +
                             shape_to_string(shape_of(b)));
  }
  Node n;
  n.op = Op::kDot;
  n.args = {a, b, -1};
  n.nargs = 2;
  return add_node(std::move(n), {1});
}

int Graph::relu(int a) {
  Node n;
  n.op = Op::kRelu;
  n.args = {a, -1, -1};
  n.nargs = 1;
  return add_node(std::move(n), shape_of(a));
}

int Graph::conv2d(int x, int w, int b) {
  const auto& sx = shape_of(x);
  const auto& sw = shape_of(w);
  const auto& sb = shape_of(b);
  if (sx.size() != 3) shape_fail(Op::kConv2d, "input must be {C,H,W}, got " + shape_to_string(sx));
  if (sw.size() != 4) shape_fail(Op::kConv2d, "weight must be {O,C,K,K}, got " + shape_to_string(sw));
  if (sw[1] != sx[0]) shape_fail(Op::kConv2d, "channel mismatch: weight " + shape_to_string(sw) +
                                                  " vs input " + shape_to_string(sx));
  if (sw[2] != sw[3]) shape_fail(Op::kConv2d, "kernel must be square, got " + shape_to_string(sw));
  if (sb.size() != 1 || sb[0] != sw[0]) {
    shape_fail(Op::kConv2d, "bias must be {O}, got " + shape_to_string(sb));
  }
  const int k = sw[2];
  if (sx[1] < k || sx[2] < k) {
    shape_fail(Op::kConv2d, "kernel " + std::to_string(k) + " larger than input " + shape_to_string(sx));
  }
  Node n;
  n.op = Op::kConv2d;
  n.args = {x, w, b};
  n.nargs = 3;
  return add_node(std::move(n), {sw[0], sx[1] - k + 1, sx[2] - k + 1});
}

int Graph::maxpool2d(int x, int window) {
  const auto& sx = shape_of(x);
  if (sx.size() != 3) shape_fail(Op::kMaxPool2d, "input must be {C,H,W}, got " + shape_to_string(sx));
  if (window < 1 || sx[1] < window || sx[2] < window) {
    shape_fail(Op::kMaxPool2d, "window " + std::to_string(window) + " does not fit " + shape_to_string(sx));
  }
  Node n;
  n.op = Op::kMaxPool2d;
  n.window = window;
  n.args = {x, -1, -1};
  n.nargs = 1;
  // Non-overlapping pooling; trailing rows/cols that do not fill a window
  // are dropped.
  return add_node(std::move(n), {sx[0], sx[1] / window, sx[2] / window});
}

int Graph::flatten(int a) {
  Node n;
  n.op = Op::kFlatten;
  n.args = {a, -1, -1};
  n.nargs = 1;
  return add_node(std::move(n), {static_cast<int>(numel(shape_of(a)))});
}

int Graph::xent_head(int logits) {
  const auto& s = shape_of(logits);
  if (s.size() != 1) shape_fail(Op::kXentHead, "logits must be 1-d, got " + shape_to_string(s));
  Node n;
  n.op = Op::kXentHead;
  n.args = {logits, -1, -1};
  n.nargs = 1;
  return add_node(std::move(n), {1});
}

void Graph::bind(std::string_view name, const Tensor& t) {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("bind: no leaf named '" + std::string(name) + "'");
  const int id = it->second;
  if (t.shape() != shapes_[static_cast<std::size_t>(id)]) {
    throw ShapeError("bind '" + std::string(name) + "': expected shape " +
                     shape_to_string(shapes_[static_cast<std::size_t>(id)]) + ", got " +
                     shape_to_string(t.shape()));
  }
  bound_[static_cast<std::size_t>(id)] = &t;
}

int Graph::leaf(std::string_view name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("no leaf named '" + std::string(name) + "'");
  return it->second;
}

const Tensor& Graph::value(int i) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.op == Op::kInput || n.op == Op::kParam) {
    const Tensor* b = bound_[static_cast<std::size_t>(i)];
    if (!b) throw Error("unbound " + std::string(op_name(n.op)) + " '" + n.name + "'");
    return *b;
  }
  return n.value;
}

void Graph::forward_one(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
      check_finite(value(i), std::string(op_name(n.op)) + " '" + n.name + "'");
      return;
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& a = value(n.args[0]);
      const Tensor& b = value(n.args[1]);
      const int m = a.rows(), k = a.cols();
      if (b.ndim() == 1) {
        if (n.value.shape() != shape_of(i)) n.value = Tensor(shape_of(i));
        for (int r = 0; r < m; ++r) {
          double s = 0.0;
          const double* arow = a.data() + static_cast<std::size_t>(r) * k;
          for (int c = 0; c < k; ++c) s += arow[c] * b[c];
          n.value[r] = s;
        }
      } else {
        const int p = b.cols();
        if (n.value.shape() != shape_of(i)) n.value = Tensor(shape_of(i));
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < p; ++c) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += a.at(r, t) * b.at(t, c);
            n.value.at(r, c) = s;
          }
        }
      }
      break;
    }
    case Op::kAdd: {
      const Tensor& a = value(n.args[0]);
      const Tensor& b = value(n.args[1]);
      if (n.value.shape() != a.shape()) n.value = Tensor(a.shape());
      for (std::int64_t j = 0; j < a.size(); ++j) n.value[j] = a[j] + b[j];
      break;
    }
    case Op::kScale: {
      const Tensor& a = value(n.args[0]);
      if (n.value.shape() != a.shape()) n.value = Tensor(a.shape());
      for (std::int64_t j = 0; j < a.size(); ++j) n.value[j] = n.alpha * a[j];
      break;
    }
    case Op::kDot: {
      const Tensor& a = value(n.args[0]);
      const Tensor& b = value(n.args[1]);
      double s = 0.0;
      for (std::int64_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
      n.value = Tensor::scalar(s);
      break;
    }
    case Op::kRelu: {
      const Tensor& a = value(n.args[0]);
      if (n.value.shape() != a.shape()) n.value = Tensor(a.shape());
      for (std::int64_t j = 0; j < a.size(); ++j) n.value[j] = a[j] > 0.0 ? a[j] : 0.0;
      break;
    }
    case Op::kConv2d: {
      const Tensor& x = value(n.args[0]);
      const Tensor& w = value(n.args[1]);
      const Tensor& b = value(n.args[2]);
      const int ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
      const int co = w.shape()[0], k = w.shape()[2];
      const int oh = h - k + 1, ow = wd - k + 1;
      if (n.value.shape() != shape_of(i)) n.value = Tensor(shape_of(i));
      for (int o = 0; o < co; ++o) {
        for (int r = 0; r < oh; ++r) {
          for (int c = 0; c < ow; ++c) {
            double s = b[o];
            for (int ch = 0; ch < ci; ++ch) {
              for (int p = 0; p < k; ++p) {
                const double* xrow = x.data() + (static_cast<std::size_t>(ch) * h + r + p) * wd + c;
                const double* wrow = w.data() + ((static_cast<std::size_t>(o) * ci + ch) * k + p) * k;
                for (int q = 0; q < k; ++q) s += wrow[q] * xrow[q];
              }
            }
            n.value[(static_cast<std::size_t>(o) * oh + r) * ow + c] = s;
          }
        }
      }
      break;
    }
    case Op::kMaxPool2d: {
      const Tensor& x = value(n.args[0]);
      const int ch = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
      const int v = n.window;
      const int oh = h / v, ow = wd / v;
      if (n.value.shape() != shape_of(i)) n.value = Tensor(shape_of(i));
      n.arg_index.assign(static_cast<std::size_t>(n.value.size()), 0);
      for (int c = 0; c < ch; ++c) {
        for (int r = 0; r < oh; ++r) {
          for (int q = 0; q < ow; ++q) {
            int best = (c * h + r * v) * wd + q * v;
            double bv = x[best];
            for (int p = 0; p < v; ++p) {
              for (int u = 0; u < v; ++u) {
                const int idx = (c * h + r * v + p) * wd + q * v + u;
                if (x[idx] > bv) {
                  bv = x[idx];
                  best = idx;
                }
              }
            }
            const int out = (c * oh + r) * ow + q;
            n.value[out] = bv;
            n.arg_index[static_cast<std::size_t>(out)] = best;
          }
        }
      }
      break;
    }
    case Op::kFlatten: {
      const Tensor& a = value(n.args[0]);
      n.value = a.reshaped(shape_of(i));
      break;
    }
    case Op::kXentHead: {
      const Tensor& l = value(n.args[0]);
      if (label_ < 0 || label_ >= static_cast<int>(l.size())) {
        throw Error("xent_head: class index " + std::to_string(label_) + " out of range for " +
                    std::to_string(l.size()) + " logits");
      }
      double m = l[0];
      for (std::int64_t j = 1; j < l.size(); ++j) m = std::max(m, l[j]);
      double s = 0.0;
      for (std::int64_t j = 0; j < l.size(); ++j) s += std::exp(l[j] - m);
      n.value = Tensor::scalar(m + std::log(s) - l[label_]);
      break;
    }
  }
  check_finite(n.value, std::string(op_name(n.op)) + " forward at node " + std::to_string(i));
}

const Tensor& Graph::forward(int node) {
  for (int i = 0; i <= node; ++i) forward_one(i);
  last_forward_ = node;
  return value(node);
}

Tensor& Graph::grad_slot(int i) {
  Tensor& g = grads_[static_cast<std::size_t>(i)];
  if (!grad_set_[static_cast<std::size_t>(i)]) {
    const Tensor& v = value(i);
    if (g.shape() != v.shape()) g = Tensor(v.shape());
    else g.fill(0.0);
    grad_set_[static_cast<std::size_t>(i)] = 1;
  }
  return g;
}

void Graph::backward(int node) {
  if (value(node).size() != 1) {
    throw ShapeError("backward: output must be scalar, got shape " +
                     shape_to_string(value(node).shape()));
  }
  backward(node, Tensor::scalar(1.0));
}

void Graph::backward(int node, const Tensor& seed) {
  if (last_forward_ < node) throw Error("backward before forward");
  if (!seed.same_shape(value(node))) {
    throw ShapeError("backward: seed shape " + shape_to_string(seed.shape()) +
                     " does not match output shape " + shape_to_string(value(node).shape()));
  }
  std::fill(grad_set_.begin(), grad_set_.end(), 0);
  grad_slot(node) = seed;
  for (int i = node; i >= 0; --i) {
    if (!grad_set_[static_cast<std::size_t>(i)]) continue;
    backward_one(i);
    check_finite(grads_[static_cast<std::size_t>(i)],
                 std::string(op_name(nodes_[static_cast<std::size_t>(i)].op)) +
                     " backward at node " + std::to_string(i));
  }
}

void Graph::backward_one(int i) {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  const Tensor& g = grads_[static_cast<std::size_t>(i)];
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& a = value(n.args[0]);
      const Tensor& b = value(n.args[1]);
      Tensor& ga = grad_slot(n.args[0]);
      Tensor& gb = grad_slot(n.args[1]);
      const int m = a.rows(), k = a.cols();
      if (b.ndim() == 1) {
        for (int r = 0; r < m; ++r) {
          const double gr = g[r];
          double* garow = ga.data() + static_cast<std::size_t>(r) * k;
          const double* arow = a.data() + static_cast<std::size_t>(r) * k;
          for (int c = 0; c < k; ++c) {
            garow[c] += gr * b[c];
            gb[c] += gr * arow[c];
          }
        }
      } else {
        const int p = b.cols();
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < p; ++c) {
            const double grc = g.at(r, c);
            for (int t = 0; t < k; ++t) {
              ga.at(r, t) += grc * b.at(t, c);
              gb.at(t, c) += grc * a.at(r, t);
            }
          }
        }
      }
      return;
    }
    case Op::kAdd: {
      axpy(1.0, g, grad_slot(n.args[0]));
      axpy(1.0, g, grad_slot(n.args[1]));
      return;
    }
    case Op::kScale: {
      axpy(n.alpha, g, grad_slot(n.args[0]));
      return;
    }
    case Op::kDot: {
      const double gs = g[0];
      axpy(gs, value(n.args[1]), grad_slot(n.args[0]));
      axpy(gs, value(n.args[0]), grad_slot(n.args[1]));
      return;
    }
    case Op::kRelu: {
      const Tensor& a = value(n.args[0]);
      Tensor& ga = grad_slot(n.args[0]);
      for (std::int64_t j = 0; j < a.size(); ++j) {
        if (a[j] > 0.0) ga[j] += g[j];
      }
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = value(n.args[0]);
      const Tensor& w = value(n.args[1]);
      Tensor& gx = grad_slot(n.args[0]);
      Tensor& gw = grad_slot(n.args[1]);
      Tensor& gb = grad_slot(n.args[2]);
      const int ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
      const int co = w.shape()[0], k = w.shape()[2];
      const int oh = h - k + 1, ow = wd - k + 1;
      for (int o = 0; o < co; ++o) {
        for (int r = 0; r < oh; ++r) {
          for (int c = 0; c < ow; ++c) {
            const double go = g[(static_cast<std::size_t>(o) * oh + r) * ow + c];
            gb[o] += go;
            for (int ch = 0; ch < ci; ++ch) {
              for (int p = 0; p < k; ++p) {
                for (int q = 0; q < k; ++q) {
                  const int xi = (ch * h + r + p) * wd + c + q;
                  const int wi = ((o * ci + ch) * k + p) * k + q;
                  gx[xi] += go * w[wi];
                  gw[wi] += go * x[xi];
                }
              }
            }
          }
        }
      }
      return;
    }
    case Op::kMaxPool2d: {
      Tensor& gx = grad_slot(n.args[0]);
      for (std::int64_t j = 0; j < g.size(); ++j) {
        gx[n.arg_index[static_cast<std::size_t>(j)]] += g[j];
      }
      return;
    }
    case Op::kFlatten: {
      Tensor& ga = grad_slot(n.args[0]);
      for (std::int64_t j = 0; j < g.size(); ++j) ga[j] += g[j];
      return;
    }
    case Op::kXentHead: {
      const Tensor& l = value(n.args[0]);
      Tensor& gl = grad_slot(n.args[0]);
      double m = l[0];
      for (std::int64_t j = 1; j < l.size(); ++j) m = std::max(m, l[j]);
      double s = 0.0;
      for (std::int64_t j = 0; j < l.size(); ++j) s += std::exp(l[j] - m);
      const double gs = g[0];
      for (std::int64_t j = 0; j < l.size(); ++j) {
        double p = std::exp(l[j] - m) / s;
        if (static_cast<int>(j) == label_) p -= 1.0;
        gl[j] += gs * p;
      }
      return;
    }
  }
}

const Tensor& Graph::gradient(int node) const {
  if (!grad_set_[static_cast<std::size_t>(node)]) {
    throw Error("no gradient at node " + std::to_string(node) +
                " (not reached by backward, or backward not run)");
  }
  return grads_[static_cast<std::size_t>(node)];
}

const Tensor& Graph::gradient(std::string_view name) const { return gradient(leaf(name)); }

std::map<std::string, Tensor> Graph::param_gradients() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : by_name_) {
    if (nodes_[static_cast<std::size_t>(id)].op != Op::kParam) continue;
    if (grad_set_[static_cast<std::size_t>(id)]) {
      out[name] = grads_[static_cast<std::size_t>(id)];
    } else {
      out[name] = Tensor(shapes_[static_cast<std::size_t>(id)]);
    }
  }
  return out;
}

Tensor forward_eval(Graph& g, int output, const std::map<std::string, Tensor>& bindings) {
  for (const auto& [name, t] : bindings) g.bind(name, t);
  return g.forward(output);
}

Tensor grad(Graph& g, int output, std::string_view wrt,
            const std::map<std::string, Tensor>& bindings) {
  for (const auto& [name, t] : bindings) g.bind(name, t);
  g.forward(output);
  g.backward(output);
  return g.gradient(wrt);
}

}  // namespace curvlab::ad
