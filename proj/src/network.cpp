#include "curvlab/network.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "curvlab/error.hpp"
#include "curvlab/rng.hpp"

namespace curvlab {
namespace {

std::string join_dims(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(v[i]);
  }
  return s;
}

// Walks the layer chain, returning the shape after each layer. Throws
// ShapeError naming the offending layer on any mismatch.
struct ChainCheck {
  std::vector<int> input_shape;
  std::vector<int> output_shape;
};

ChainCheck check_chain(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ShapeError("network: empty layer list");

  std::vector<int> cur;
  if (const auto* a = std::get_if<AffineLayer>(&layers.front())) {
    cur = {a->in};
  } else if (const auto* c = std::get_if<Conv2dLayer>(&layers.front())) {
    cur = {c->in_c, c->in_h, c->in_w};
  } else {
    throw ShapeError("network: first layer must be affine or conv2d, got " +
                     layer_to_string(layers.front()));
  }
  ChainCheck out;
  out.input_shape = cur;

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    auto fail = [&](const std::string& why) {
      throw ShapeError("network: dimension chain breaks at layer " + std::to_string(i) + " (" +
                       layer_to_string(l) + "): " + why + ", incoming shape " + join_dims(cur));
    };
    if (const auto* a = std::get_if<AffineLayer>(&l)) {
      if (a->in <= 0 || a->out <= 0) fail("non-positive dimension");
      if (cur.size() != 1) fail("affine needs a flat input; insert a flatten layer");
      if (cur[0] != a->in) fail("expects input dim " + std::to_string(a->in));
      cur = {a->out};
    } else if (std::get_if<ReluLayer>(&l)) {
      // shape preserved
    } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
      if (c->in_c <= 0 || c->out_c <= 0 || c->kernel <= 0) fail("non-positive dimension");
      if (cur.size() != 3) fail("conv2d needs a CxHxW input");
      if (cur[0] != c->in_c) fail("expects " + std::to_string(c->in_c) + " input channels");
      if (cur[1] < c->kernel || cur[2] < c->kernel) fail("kernel larger than input");
      cur = {c->out_c, cur[1] - c->kernel + 1, cur[2] - c->kernel + 1};
    } else if (const auto* p = std::get_if<MaxPool2dLayer>(&l)) {
      if (p->window <= 0) fail("non-positive window");
      if (cur.size() != 3) fail("maxpool2d needs a CxHxW input");
      if (cur[1] < p->window || cur[2] < p->window) fail("window larger than input");
      cur = {cur[0], cur[1] / p->window, cur[2] / p->window};
    } else if (std::get_if<FlattenLayer>(&l)) {
      int n = std::accumulate(cur.begin(), cur.end(), 1, std::multiplies<int>());
      cur = {n};
    }
  }
  if (!std::holds_alternative<AffineLayer>(layers.back()))
    throw ShapeError("network: last layer must be affine (the logit layer), got " +
                     layer_to_string(layers.back()));
  out.output_shape = cur;
  return out;
}

}  // namespace

std::string layer_to_string(const LayerSpec& l) {
  char buf[96];
  if (const auto* a = std::get_if<AffineLayer>(&l)) {
    std::snprintf(buf, sizeof buf, "affine %d->%d", a->in, a->out);
  } else if (std::get_if<ReluLayer>(&l)) {
    std::snprintf(buf, sizeof buf, "relu");
  } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
    std::snprintf(buf, sizeof buf, "conv2d %dx%dx%d k%d -> %d", c->in_c, c->in_h, c->in_w,
                  c->kernel, c->out_c);
  } else if (const auto* p = std::get_if<MaxPool2dLayer>(&l)) {
    std::snprintf(buf, sizeof buf, "maxpool2d w%d", p->window);
  } else {
    std::snprintf(buf, sizeof buf, "flatten");
  }
  return buf;
}

Network::Network(std::vector<LayerSpec> layers, std::map<std::string, Tensor> params,
                 std::uint64_t init_seed, int epoch)
    : layers_(std::move(layers)), params_(std::move(params)), init_seed_(init_seed), epoch_(epoch) {
  ChainCheck chain = check_chain(layers_);
  input_dim_ = std::accumulate(chain.input_shape.begin(), chain.input_shape.end(), 1,
                               std::multiplies<int>());
  num_classes_ = chain.output_shape[0];

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto expect = [&](const std::string& name, const std::vector<int>& shape) {
      auto it = params_.find(name);
      if (it == params_.end()) throw ShapeError("network: missing parameter " + name);
      if (it->second.shape() != shape)
        throw ShapeError("network: parameter " + name + " has shape " +
                         shape_to_string(it->second.shape()) + ", expected " +
                         shape_to_string(shape));
      param_order_.push_back(name);
    };
    std::string prefix = "L" + std::to_string(i);
    if (const auto* a = std::get_if<AffineLayer>(&layers_[i])) {
      expect(prefix + ".W", {a->out, a->in});
      expect(prefix + ".b", {a->out});
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layers_[i])) {
      expect(prefix + ".W", {c->out_c, c->in_c, c->kernel, c->kernel});
      expect(prefix + ".b", {c->out_c});
    }
  }
  if (params_.size() != param_order_.size())
    throw ShapeError("network: " + std::to_string(params_.size() - param_order_.size()) +
                     " parameter(s) not referenced by any layer");
}

Tensor& Network::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("network: no parameter named " + name);
  return it->second;
}

const Tensor& Network::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("network: no parameter named " + name);
  return it->second;
}

std::int64_t Network::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

Network build_network(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  check_chain(layers);
  Rng rng(seed);
  std::map<std::string, Tensor> params;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::string prefix = "L" + std::to_string(i);
    if (const auto* a = std::get_if<AffineLayer>(&layers[i])) {
      double bound = 1.0 / std::sqrt(static_cast<double>(a->in));
      params.emplace(prefix + ".W", rng.uniform_tensor({a->out, a->in}, -bound, bound));
      params.emplace(prefix + ".b", rng.uniform_tensor({a->out}, -bound, bound));
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      double bound = 1.0 / std::sqrt(static_cast<double>(c->in_c * c->kernel * c->kernel));
      params.emplace(prefix + ".W",
                     rng.uniform_tensor({c->out_c, c->in_c, c->kernel, c->kernel}, -bound, bound));
      params.emplace(prefix + ".b", rng.uniform_tensor({c->out_c}, -bound, bound));
    }
  }
  return Network(layers, std::move(params), seed, 0);
}

std::vector<LayerSpec> named_layers(std::string_view name, int input_dim, int num_classes) {
  if (name == "mlp-2d") {
    return {AffineLayer{2, 32}, ReluLayer{}, AffineLayer{32, 32}, ReluLayer{},
            AffineLayer{32, num_classes}};
  }
  if (name == "mlp-img") {
    return {AffineLayer{input_dim, 256}, ReluLayer{}, AffineLayer{256, 128}, ReluLayer{},
            AffineLayer{128, num_classes}};
  }
  if (name == "convnet-img") {
    // Assumes a square single-channel image.
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(input_dim))));
    if (side * side != input_dim)
      throw ShapeError("convnet-img needs a square input, got dim " + std::to_string(input_dim));
    int h1 = side - 2, w1 = h1 / 2;       // conv k3 then pool 2
    int h2 = w1 - 2, w2 = h2 / 2;         // conv k3 then pool 2
    int flat = 16 * w2 * w2;
    return {Conv2dLayer{1, 8, 3, side, side},
            ReluLayer{},
            MaxPool2dLayer{2},
            Conv2dLayer{8, 16, 3, w1, w1},
            ReluLayer{},
            MaxPool2dLayer{2},
            FlattenLayer{},
            AffineLayer{flat, 64},
            ReluLayer{},
            AffineLayer{64, num_classes}};
  }
  throw Error("unknown network spec '" + std::string(name) +
              "' (expected mlp-2d, mlp-img or convnet-img)");
}

NetEval::NetEval(const Network& net) : net_(&net) {
  const auto& layers = net.layers();
  ChainCheck chain = check_chain(layers);
  x_node_ = graph_.input("x", chain.input_shape);
  int cur = x_node_;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::string prefix = "L" + std::to_string(i);
    if (const auto* a = std::get_if<AffineLayer>(&layers[i])) {
      int w = graph_.param(prefix + ".W", {a->out, a->in});
      int b = graph_.param(prefix + ".b", {a->out});
      cur = graph_.add(graph_.matmul(w, cur), b);
    } else if (std::get_if<ReluLayer>(&layers[i])) {
      cur = graph_.relu(cur);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layers[i])) {
      int w = graph_.param(prefix + ".W", {c->out_c, c->in_c, c->kernel, c->kernel});
      int b = graph_.param(prefix + ".b", {c->out_c});
      cur = graph_.conv2d(cur, w, b);
    } else if (const auto* p = std::get_if<MaxPool2dLayer>(&layers[i])) {
      cur = graph_.maxpool2d(cur, p->window);
    } else {
      cur = graph_.flatten(cur);
    }
  }
  logits_node_ = cur;
  loss_node_ = graph_.xent_head(cur);
  for (const auto& [name, t] : net.params()) graph_.bind(name, t);
}

void NetEval::set_input(const Tensor& x) {
  if (x.size() != net_->input_dim())
    throw ShapeError("network input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(net_->input_dim()));
  x_storage_ = x.reshaped(graph_.shape_of(x_node_));
  graph_.bind("x", x_storage_);
}

Tensor NetEval::logits(const Tensor& x) {
  set_input(x);
  return graph_.forward(logits_node_);
}

double NetEval::loss(const Tensor& x, int y) {
  if (y < 0 || y >= net_->num_classes())
    throw Error("class index " + std::to_string(y) + " out of range [0, " +
                std::to_string(net_->num_classes()) + ")");
  set_input(x);
  graph_.bind_label(y);
  return graph_.forward(loss_node_).scalar_value();
}

Tensor NetEval::input_gradient(const Tensor& x, int y) {
  loss(x, y);
  graph_.backward(loss_node_);
  return graph_.gradient(x_node_).reshaped({net_->input_dim()});
}

Tensor NetEval::logits_input_gradient(const Tensor& x, const Tensor& seed) {
  if (seed.size() != net_->num_classes())
    throw ShapeError("logit gradient seed has " + std::to_string(seed.size()) +
                     " values, expected " + std::to_string(net_->num_classes()));
  set_input(x);
  graph_.forward(logits_node_);
  graph_.backward(logits_node_, seed);
  return graph_.gradient(x_node_).reshaped({net_->input_dim()});
}

std::map<std::string, Tensor> NetEval::param_gradient(const Tensor& x, int y) {
  loss(x, y);
  graph_.backward(loss_node_);
  std::map<std::string, Tensor> out;
  for (const auto& name : net_->param_names()) out.emplace(name, graph_.gradient(name));
  return out;
}

double NetEval::accumulate_param_gradient(const Tensor& x, int y, double scale,
                                          std::map<std::string, Tensor>& acc) {
  double value = loss(x, y);
  graph_.backward(loss_node_);
  for (const auto& name : net_->param_names()) {
    Tensor g = graph_.gradient(name);
    auto it = acc.find(name);
    if (it == acc.end()) it = acc.emplace(name, Tensor::zeros_like(g)).first;
    axpy(scale, g, it->second);
  }
  return value;
}

Tensor logits(const Network& net, const Tensor& x) {
  NetEval eval(net);
  return eval.logits(x);
}

double xent_loss(const Network& net, const Tensor& x, int y) {
  NetEval eval(net);
  return eval.loss(x, y);
}

}  // namespace curvlab
