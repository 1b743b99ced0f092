#include <doctest.h>

#include <cmath>
#include <map>
#include <string>

#include "curvlab/autodiff.hpp"
#include "curvlab/error.hpp"
#include "curvlab/numdiff.hpp"
#include "curvlab/rng.hpp"
#include "curvlab/tensor.hpp"

using namespace curvlab;

namespace {

// |a - f| <= tol * max(1, |f|): relative above 1, absolute below, so tiny
// gradient coordinates are not held to an impossible relative standard.
void check_close(const Tensor& a, const Tensor& f, double tol) {
  REQUIRE(a.same_shape(f));
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CAPTURE(i);
    CHECK(std::fabs(a[i] - f[i]) <= tol * std::max(1.0, std::fabs(f[i])));
  }
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("dot product forward") {
  ad::Graph g;
  int x = g.input("x", {2});
  int w = g.input("w", {2});
  int out = g.dot(x, w);
  Tensor r = ad::forward_eval(g, out, {{"x", Tensor({2}, {1, 2})}, {"w", Tensor({2}, {3, 4})}});
  CHECK(r.scalar_value() == 11.0);
}

TEST_CASE("relu forward") {
  ad::Graph g;
  int x = g.input("x", {3});
  int out = g.relu(x);
  Tensor r = ad::forward_eval(g, out, {{"x", Tensor({3}, {-1, 0, 2})}});
  CHECK(r[0] == 0);
  CHECK(r[1] == 0);
  CHECK(r[2] == 2);
}

TEST_CASE("softmax symmetry through the loss head") {
  // uniform logits: every class has probability 1/3, so the negative
  // log-likelihood is ln 3 regardless of the label
  ad::Graph g;
  int x = g.input("x", {3});
  int out = g.xent_head(x);
  for (int label = 0; label < 3; ++label) {
    g.bind("x", Tensor({3}, {0, 0, 0}));
    g.bind_label(label);
    double loss = g.forward(out).scalar_value();
    CHECK(std::exp(-loss) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("quadratic gradient is Ax") {
  // l(x) = x.(Ax)/2 with symmetric A: gradient Ax
  ad::Graph g;
  int x = g.input("x", {2});
  int A = g.constant(Tensor({2, 2}, {2, 1, 1, 3}));
  int out = g.scale(0.5, g.dot(x, g.matmul(A, x)));
  Tensor grad = ad::grad(g, out, "x", {{"x", Tensor({2}, {1, 1})}});
  CHECK(grad[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(grad[1] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("linear gradient is w for any x") {
  ad::Graph g;
  int x = g.input("x", {4});
  int w = g.input("w", {4});
  int out = g.dot(x, w);
  Rng rng(21);
  Tensor wv = rng.normal_tensor({4});
  for (int rep = 0; rep < 3; ++rep) {
    Tensor grad = ad::grad(g, out, "x", {{"x", rng.normal_tensor({4})}, {"w", wv}});
    for (int i = 0; i < 4; ++i) CHECK(grad[i] == wv[i]);
  }
}

TEST_CASE("gradients match central differences on a two-layer net") {
  ad::Graph g;
  int x = g.input("x", {5});
  int W1 = g.param("W1", {8, 5});
  int b1 = g.param("b1", {8});
  int W2 = g.param("W2", {3, 8});
  int b2 = g.param("b2", {3});
  int h = g.relu(g.add(g.matmul(W1, x), b1));
  int logits = g.add(g.matmul(W2, h), b2);
  int loss = g.xent_head(logits);

  Rng rng(31);
  for (int rep = 0; rep < 5; ++rep) {
    std::map<std::string, Tensor> binds = {
        {"x", rng.uniform_tensor({5}, -1, 1)},
        {"W1", rng.uniform_tensor({8, 5}, -1, 1)},
        {"b1", rng.uniform_tensor({8}, -1, 1)},
        {"W2", rng.uniform_tensor({3, 8}, -1, 1)},
        {"b2", rng.uniform_tensor({3}, -1, 1)},
    };
    g.bind_label(rep % 3);
    for (const auto& [name, value] : binds) {
      Tensor ad_grad = ad::grad(g, loss, name, binds);
      auto f = [&](const Tensor& v) {
        auto shifted = binds;
        shifted[name] = v;
        for (const auto& [n2, v2] : shifted) g.bind(n2, v2);
        return g.forward(loss).scalar_value();
      };
      Tensor fd = finite_diff_gradient(f, value, 1e-5);
      check_close(ad_grad, fd, 1e-6);
    }
  }
}

TEST_CASE("gradients match central differences through conv and pool") {
  ad::Graph g;
  int x = g.input("x", {1, 6, 6});
  int w = g.param("w", {2, 1, 3, 3});
  int b = g.param("b", {2});
  int conv = g.relu(g.conv2d(x, w, b));  // {2,4,4}
  int pool = g.maxpool2d(conv, 2);       // {2,2,2}
  int flat = g.flatten(pool);            // {8}
  int W = g.param("W", {2, 8});
  int loss = g.xent_head(g.matmul(W, flat));

  Rng rng(77);
  std::map<std::string, Tensor> binds = {
      {"x", rng.uniform_tensor({1, 6, 6}, -1, 1)},
      {"w", rng.uniform_tensor({2, 1, 3, 3}, -1, 1)},
      {"b", rng.uniform_tensor({2}, -1, 1)},
      {"W", rng.uniform_tensor({2, 8}, -1, 1)},
  };
  g.bind_label(1);
  for (const auto& [name, value] : binds) {
    Tensor ad_grad = ad::grad(g, loss, name, binds);
    auto f = [&](const Tensor& v) {
      auto shifted = binds;
      shifted[name] = v;
      for (const auto& [n2, v2] : shifted) g.bind(n2, v2);
      return g.forward(loss).scalar_value();
    };
    check_close(ad_grad, finite_diff_gradient(f, value, 1e-5), 1e-6);
  }
}

TEST_CASE("gradient is linear in the objective") {
  // grad(a f + b g) = a grad f + b grad g, exactly
  ad::Graph g;
  int x = g.input("x", {3});
  int w = g.constant(Tensor({3}, {0.5, -1.5, 2.0}));
  int f = g.dot(x, w);        // grad: w
  int q = g.dot(x, x);        // grad: 2x
  const double a = 1.25, b = -0.5;  // powers of two keep the identity bitwise
  int combo = g.add(g.scale(a, f), g.scale(b, q));
  Tensor xv({3}, {0.25, -1.0, 3.0});
  Tensor grad_combo = ad::grad(g, combo, "x", {{"x", xv}});
  for (int i = 0; i < 3; ++i) {
    double expect = a * g.value(w)[i] + b * 2.0 * xv[i];
    CHECK(grad_combo[i] == expect);
  }
}

TEST_CASE("tape replay is bit-identical") {
  ad::Graph g;
  int x = g.input("x", {4});
  int W = g.param("W", {4, 4});
  int out = g.xent_head(g.matmul(W, g.relu(x)));
  Rng rng(3);
  Tensor xv = rng.normal_tensor({4});
  Tensor Wv = rng.normal_tensor({4, 4});
  g.bind("x", xv);
  g.bind("W", Wv);
  g.bind_label(2);
  double first = g.forward(out).scalar_value();
  g.backward(out);
  Tensor grad_first = g.gradient("x");
  // perturb bindings, then restore
  Tensor other = rng.normal_tensor({4});
  g.bind("x", other);
  g.forward(out);
  g.bind("x", xv);
  double second = g.forward(out).scalar_value();
  g.backward(out);
  Tensor grad_second = g.gradient("x");
  CHECK(std::memcmp(&first, &second, sizeof(double)) == 0);
  for (int i = 0; i < 4; ++i) CHECK(grad_first[i] == grad_second[i]);
}

TEST_CASE("error cases: unbound input, shape mismatch, non-scalar backward") {
  ad::Graph g;
  int x = g.input("x", {2});
  int w = g.input("w", {2});
  int out = g.dot(x, w);
  g.bind("x", Tensor({2}, {1, 2}));
  CHECK_THROWS_WITH_AS(g.forward(out), doctest::Contains("w"), Error);
  CHECK_THROWS_AS(g.bind("x", Tensor({3}, {1, 2, 3})), ShapeError);

  ad::Graph g2;
  int a = g2.input("a", {2});
  int v = g2.relu(a);  // non-scalar
  g2.bind("a", Tensor({2}, {1, 2}));
  g2.forward(v);
  CHECK_THROWS_AS(g2.backward(v), Error);
}

TEST_CASE("matmul shape mismatch names the primitive") {
  ad::Graph g;
  int A = g.input("A", {2, 3});
  int v = g.input("v", {4});
  CHECK_THROWS_WITH_AS(g.matmul(A, v), doctest::Contains("matmul"), ShapeError);
}

TEST_CASE("poisoned input is rejected, not propagated") {
  ad::Graph g;
  int x = g.input("x", {2});
  int out = g.dot(x, x);
  Tensor bad({2}, {1, std::numeric_limits<double>::infinity()});
  g.bind("x", bad);
  CHECK_THROWS_AS(g.forward(out), NonFiniteError);
}

}  // TEST_SUITE
