#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "curvlab/autodiff.hpp"
#include "curvlab/tensor.hpp"

namespace curvlab {

struct AffineLayer {
  int in = 0, out = 0;
};
struct ReluLayer {};
struct Conv2dLayer {
  int in_c = 0, out_c = 0, kernel = 0, in_h = 0, in_w = 0;
};
struct MaxPool2dLayer {
  int window = 2;
};
struct FlattenLayer {};

using LayerSpec = std::variant<AffineLayer, ReluLayer, Conv2dLayer, MaxPool2dLayer, FlattenLayer>;

std::string layer_to_string(const LayerSpec& l);

/// Feed-forward classifier: an ordered layer list with a named parameter
/// store. The softmax cross-entropy head is part of the loss, not a layer;
/// the last layer must be affine and defines the logit count.
///
/// Networks are immutable during inference; training mutates parameter
/// values in place through `param`.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> layers, std::map<std::string, Tensor> params,
          std::uint64_t init_seed, int epoch);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }

  const std::map<std::string, Tensor>& params() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  /// Parameter names in layer order (W before b within a layer).
  const std::vector<std::string>& param_names() const { return param_order_; }
  std::int64_t param_count() const;

  std::uint64_t init_seed() const { return init_seed_; }
  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }

 private:
  std::vector<LayerSpec> layers_;
  std::map<std::string, Tensor> params_;
  std::vector<std::string> param_order_;
  int input_dim_ = 0;
  int num_classes_ = 0;
  std::uint64_t init_seed_ = 0;
  int epoch_ = 0;
};

/// Validates the layer chain and initializes parameters with a
/// fan-in-scaled uniform draw, deterministic per seed.
Network build_network(const std::vector<LayerSpec>& layers, std::uint64_t seed);

/// Reference architectures: "mlp-2d" (2-32-32-2), "mlp-img" (d-256-128-K),
/// "convnet-img" (two conv/pool blocks and an affine head).
std::vector<LayerSpec> named_layers(std::string_view name, int input_dim, int num_classes);

/// Reusable evaluation context over a frozen network: forward passes and
/// reverse-mode gradients with respect to the input or the parameters.
/// One instance per thread; parameter values are read from the network at
/// each forward pass, so in-place parameter updates are picked up.
class NetEval {
 public:
  explicit NetEval(const Network& net);

  const Network& net() const { return *net_; }

  Tensor logits(const Tensor& x);
  int predict(const Tensor& x) { return argmax(logits(x)); }
  double loss(const Tensor& x, int y);
  /// d loss / d x, flattened to {input_dim}.
  Tensor input_gradient(const Tensor& x, int y);
  /// d (seed . logits) / d x; seed has shape {num_classes}.
  Tensor logits_input_gradient(const Tensor& x, const Tensor& seed);
  std::map<std::string, Tensor> param_gradient(const Tensor& x, int y);
  /// Accumulates scale * d loss / d theta into acc and returns the loss.
  double accumulate_param_gradient(const Tensor& x, int y, double scale,
                                   std::map<std::string, Tensor>& acc);

 private:
  void set_input(const Tensor& x);

  const Network* net_ = nullptr;
  ad::Graph graph_;
  int x_node_ = -1;
  int logits_node_ = -1;
  int loss_node_ = -1;
  Tensor x_storage_;
};

Tensor logits(const Network& net, const Tensor& x);
double xent_loss(const Network& net, const Tensor& x, int y);

}  // namespace curvlab
