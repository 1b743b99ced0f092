#include <doctest.h>

#include <cmath>
#include <string>

#include "curvlab/error.hpp"
#include "curvlab/network.hpp"
#include "curvlab/numdiff.hpp"
#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

using namespace curvlab;

TEST_SUITE("network") {

TEST_CASE("initialization is deterministic per seed") {
  std::vector<LayerSpec> spec = {AffineLayer{2, 8}, ReluLayer{}, AffineLayer{8, 2}};
  Network a = build_network(spec, 7);
  Network b = build_network(spec, 7);
  for (const auto& name : a.param_names()) {
    const Tensor& pa = a.param(name);
    const Tensor& pb = b.param(name);
    REQUIRE(pa.same_shape(pb));
    for (std::int64_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  }
  Network c = build_network(spec, 8);
  bool any_diff = false;
  for (const auto& name : a.param_names())
    for (std::int64_t i = 0; i < a.param(name).size(); ++i)
      any_diff |= a.param(name)[i] != c.param(name)[i];
  CHECK(any_diff);
}

TEST_CASE("parameter count of a single affine layer") {
  Network n = build_network({AffineLayer{3072, 10}}, 1);
  CHECK(n.param_count() == 3072 * 10 + 10);
}

TEST_CASE("dimension chain break names the boundary") {
  CHECK_THROWS_WITH_AS(build_network({AffineLayer{2, 8}, AffineLayer{9, 2}}, 1),
                       doctest::Contains("layer"), Error);
}

TEST_CASE("other invalid chains") {
  // first layer must consume the input
  CHECK_THROWS_AS(build_network({ReluLayer{}, AffineLayer{2, 2}}, 1), Error);
  // last layer must be affine (logit head)
  CHECK_THROWS_AS(build_network({AffineLayer{2, 4}, ReluLayer{}}, 1), Error);
  CHECK_THROWS_AS(build_network({}, 1), Error);
}

TEST_CASE("zero net gives zero logits") {
  Network n = build_network({AffineLayer{3, 4}}, 1);
  n.param("L0.W").fill(0);
  n.param("L0.b").fill(0);
  Tensor out = logits(n, Tensor({3}, {1, -2, 5}));
  REQUIRE(out.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(out[i] == 0);
}

TEST_CASE("single affine layer computes Wx + b") {
  Network n = build_network({AffineLayer{2, 2}}, 1);
  n.param("L0.W") = Tensor({2, 2}, {1, 2, 3, 4});
  n.param("L0.b") = Tensor({2}, {10, 20});
  Tensor out = logits(n, Tensor({2}, {1, 1}));
  CHECK(out[0] == 13);
  CHECK(out[1] == 27);
}

TEST_CASE("loss at uniform logits is ln K") {
  Network n = build_network({AffineLayer{2, 3}}, 1);
  n.param("L0.W").fill(0);
  n.param("L0.b").fill(0);
  for (int y = 0; y < 3; ++y)
    CHECK(xent_loss(n, Tensor({2}, {5, -1}), y) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("loss on logits (1,2,3) with label 2") {
  Network n = build_network({AffineLayer{1, 3}}, 1);
  n.param("L0.W") = Tensor({3, 1}, {1, 2, 3});
  n.param("L0.b") = Tensor({3}, {0, 0, 0});
  double loss = xent_loss(n, Tensor({1}, {1}), 2);
  CHECK(loss == doctest::Approx(0.40761).epsilon(1e-4));
  CHECK(loss == doctest::Approx(std::log(1 + std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-14));
}

TEST_CASE("dominant logit does not overflow") {
  Network n = build_network({AffineLayer{1, 2}}, 1);
  n.param("L0.W") = Tensor({2, 1}, {1000, 0});
  n.param("L0.b") = Tensor({2}, {0, 0});
  double loss = xent_loss(n, Tensor({1}, {1}), 0);
  CHECK(std::isfinite(loss));
  CHECK(loss >= 0);
  CHECK(loss < 1e-300);
}

TEST_CASE("loss is nonnegative and the binary ln-2 threshold matches argmax") {
  Network n = build_network({AffineLayer{2, 16}, ReluLayer{}, AffineLayer{16, 2}}, 3);
  NetEval eval(n);
  Rng rng(9);
  const double ln2 = std::log(2.0);
  for (int i = 0; i < 200; ++i) {
    Tensor x = rng.normal_tensor({2});
    int y = rng.uniform_int(2);
    double loss = eval.loss(x, y);
    CHECK(loss >= 0);
    if (std::fabs(loss - ln2) < 1e-12) continue;  // knife-edge tie
    CHECK((eval.predict(x) == y) == (loss < ln2));
  }
}

TEST_CASE("invalid class index and input shape are rejected") {
  Network n = build_network({AffineLayer{2, 2}}, 1);
  NetEval eval(n);
  CHECK_THROWS_AS(eval.loss(Tensor({2}, {0, 0}), 2), Error);
  CHECK_THROWS_AS(eval.loss(Tensor({2}, {0, 0}), -1), Error);
  CHECK_THROWS_AS(eval.logits(Tensor({3}, {0, 0, 0})), ShapeError);
}

TEST_CASE("named architectures have the advertised shapes") {
  auto mlp2d = named_layers("mlp-2d", 2, 2);
  Network n1 = build_network(mlp2d, 1);
  CHECK(n1.input_dim() == 2);
  CHECK(n1.num_classes() == 2);
  CHECK(n1.param_count() == 2 * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2);

  Network n2 = build_network(named_layers("mlp-img", 784, 10), 1);
  CHECK(n2.input_dim() == 784);
  CHECK(n2.num_classes() == 10);

  Network n3 = build_network(named_layers("convnet-img", 28 * 28, 10), 1);
  CHECK(n3.input_dim() == 28 * 28);
  CHECK(n3.num_classes() == 10);
  NetEval eval(n3);
  Rng rng(2);
  Tensor out = eval.logits(rng.uniform_tensor({28 * 28}, 0, 255));
  CHECK(out.size() == 10);

  CHECK_THROWS_AS(named_layers("resnet", 2, 2), Error);
}

TEST_CASE("input gradient matches central differences") {
  Network n = build_network(named_layers("mlp-2d", 2, 2), 5);
  NetEval eval(n);
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = rng.uniform_tensor({2}, -1, 1);
    int y = rng.uniform_int(2);
    Tensor g = eval.input_gradient(x, y);
    Tensor fd = finite_diff_gradient([&](const Tensor& v) { return eval.loss(v, y); }, x, 1e-5);
    for (int i = 0; i < 2; ++i)
      CHECK(std::fabs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, std::fabs(fd[i])));
  }
}

TEST_CASE("parameter gradient matches central differences") {
  Network n = build_network({AffineLayer{3, 5}, ReluLayer{}, AffineLayer{5, 2}}, 11);
  NetEval eval(n);
  Rng rng(43);
  Tensor x = rng.uniform_tensor({3}, -1, 1);
  int y = 1;
  auto grads = eval.param_gradient(x, y);
  for (const auto& name : n.param_names()) {
    const Tensor& p = n.param(name);
    Tensor fd = finite_diff_gradient(
        [&](const Tensor& v) {
          Network m = n;  // perturb a copy
          m.param(name) = v;
          NetEval e2(m);
          return e2.loss(x, y);
        },
        p, 1e-5);
    const Tensor& g = grads.at(name);
    for (std::int64_t i = 0; i < p.size(); ++i)
      CHECK(std::fabs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, std::fabs(fd[i])));
  }
}

TEST_CASE("logit-seeded input gradient differentiates one logit") {
  Network n = build_network(named_layers("mlp-2d", 2, 2), 19);
  NetEval eval(n);
  Rng rng(47);
  Tensor x = rng.uniform_tensor({2}, -1, 1);
  for (int k = 0; k < 2; ++k) {
    Tensor seed({2});
    seed.fill(0);
    seed[k] = 1;
    Tensor g = eval.logits_input_gradient(x, seed);
    Tensor fd = finite_diff_gradient([&](const Tensor& v) { return eval.logits(v)[k]; }, x, 1e-5);
    for (int i = 0; i < 2; ++i)
      CHECK(std::fabs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, std::fabs(fd[i])));
  }
}

TEST_CASE("accumulate_param_gradient scales and sums") {
  Network n = build_network({AffineLayer{2, 2}}, 3);
  NetEval eval(n);
  Rng rng(53);
  Tensor x1 = rng.normal_tensor({2}), x2 = rng.normal_tensor({2});
  std::map<std::string, Tensor> acc;
  double l1 = eval.accumulate_param_gradient(x1, 0, 2.0, acc);
  double l2 = eval.accumulate_param_gradient(x2, 1, -1.0, acc);
  CHECK(l1 == eval.loss(x1, 0));
  CHECK(l2 == eval.loss(x2, 1));
  auto g1 = eval.param_gradient(x1, 0);
  auto g2 = eval.param_gradient(x2, 1);
  for (const auto& name : n.param_names()) {
    const Tensor& a = acc.at(name);
    for (std::int64_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(2.0 * g1.at(name)[i] - g2.at(name)[i]).epsilon(1e-13));
  }
}

TEST_CASE("poisoned input is rejected") {
  Network n = build_network({AffineLayer{2, 2}}, 1);
  NetEval eval(n);
  Tensor bad({2}, {std::nan(""), 0});
  CHECK_THROWS_AS(eval.logits(bad), NonFiniteError);
}

TEST_CASE("convnet gradient matches central differences on a 12x12 input") {
  std::vector<LayerSpec> spec = {Conv2dLayer{1, 2, 3, 12, 12}, ReluLayer{}, MaxPool2dLayer{2},
                                 FlattenLayer{}, AffineLayer{50, 2}};
  Network n = build_network(spec, 29);
  NetEval eval(n);
  Rng rng(59);
  Tensor x = rng.uniform_tensor({144}, -1, 1);
  Tensor g = eval.input_gradient(x, 0);
  Tensor fd = finite_diff_gradient([&](const Tensor& v) { return eval.loss(v, 0); }, x, 1e-5);
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(std::fabs(g[i] - fd[i]) <= 1e-6 * std::max(1.0, std::fabs(fd[i])));
}

}  // TEST_SUITE
