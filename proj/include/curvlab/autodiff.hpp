#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "curvlab/tensor.hpp"

namespace curvlab::ad {

enum class Op {
  kInput,
  kParam,
  kConst,
  kMatMul,
  kAdd,
  kScale,
  kDot,
  kRelu,
  kConv2d,
  kMaxPool2d,
  kFlatten,
  kXentHead,  // fused log-softmax + negative log-likelihood
};

const char* op_name(Op op);

/// Reverse-mode tape over a fixed computation graph. Nodes are appended in
/// topological order; replaying a forward pass with identical bindings is
/// bit-identical. Input and parameter leaves are bound by pointer and must
/// outlive any forward/backward call that uses them.
///
/// A graph instance is single-writer: one thread evaluates at a time.
/// Parallel evaluation uses one graph per worker over shared parameters.
class Graph {
 public:
  struct Node {
    Op op = Op::kConst;
    std::array<int, 3> args{-1, -1, -1};
    int nargs = 0;
    std::string name;     // inputs and params
    Tensor value;         // forward cache (or the constant itself)
    double alpha = 0.0;   // kScale factor
    int window = 0;       // kMaxPool2d
    std::vector<int> arg_index;  // kMaxPool2d winner positions
  };

  int input(std::string name, std::vector<int> shape);
  int param(std::string name, std::vector<int> shape);
  int constant(Tensor v);

  int matmul(int a, int b);
  int add(int a, int b);
  int scale(double alpha, int a);
  int dot(int a, int b);
  int relu(int a);
  // x: {C,H,W}, w: {O,C,K,K}, b: {O}; stride 1, no padding.
  int conv2d(int x, int w, int b);
  int maxpool2d(int x, int window);
  int flatten(int a);
  // logits: {K}; the class label is bound per evaluation via bind_label.
  int xent_head(int logits);

  // Binds a leaf by name. The tensor's shape must equal the declared shape.
  void bind(std::string_view name, const Tensor& t);
  void bind_label(int label) { label_ = label; }

  // Evaluates nodes [0, node] and returns the value at `node`.
  const Tensor& forward(int node);

  // Reverse pass from `node`, which must be scalar (seed 1). Call forward first.
  void backward(int node);
  // Reverse pass with an explicit output seed (same shape as value(node)).
  void backward(int node, const Tensor& seed);

  const Tensor& value(int node) const;
  const Tensor& gradient(int node) const;
  const Tensor& gradient(std::string_view name) const;
  bool has_leaf(std::string_view name) const { return by_name_.count(name) > 0; }
  int leaf(std::string_view name) const;

  // Gradients of every kParam leaf, keyed by name. Valid after backward.
  std::map<std::string, Tensor> param_gradients() const;

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape_of(int i) const { return shapes_[static_cast<std::size_t>(i)]; }

 private:
  int add_node(Node n, std::vector<int> shape);
  const Tensor& value_mutable_check(int i) const;
  void forward_one(int i);
  void backward_one(int i);
  Tensor& grad_slot(int i);

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> shapes_;          // declared shapes
  std::vector<const Tensor*> bound_;              // leaf bindings
  std::vector<Tensor> grads_;
  std::vector<char> grad_set_;
  std::map<std::string, int, std::less<>> by_name_;
  int label_ = -1;
  int last_forward_ = -1;
};

// Convenience wrappers matching the per-operation contracts: evaluate the
// graph output under the given bindings, or the gradient of a scalar output
// with respect to one named leaf.
Tensor forward_eval(Graph& g, int output, const std::map<std::string, Tensor>& bindings);
Tensor grad(Graph& g, int output, std::string_view wrt,
            const std::map<std::string, Tensor>& bindings);

}  // namespace curvlab::ad
