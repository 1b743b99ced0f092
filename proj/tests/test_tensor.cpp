#include <doctest.h>

#include <cmath>
#include <cstring>

#include "curvlab/error.hpp"
#include "curvlab/tensor.hpp"

using namespace curvlab;

TEST_SUITE("tensor") {

TEST_CASE("shape and size agree") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.ndim() == 2);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  Tensor s = Tensor::scalar(4.5);
  CHECK(s.size() == 1);
  CHECK(s.scalar_value() == 4.5);
}

TEST_CASE("construction with data validates length") {
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.at(1, 0) == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({-1}), ShapeError);
}

TEST_CASE("reshape preserves data, rejects bad element counts") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({6});
  CHECK(r.ndim() == 1);
  for (int i = 0; i < 6; ++i) CHECK(r[i] == i + 1);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("dot product by hand") {
  Tensor x({2}, {1, 2});
  Tensor w({2}, {3, 4});
  CHECK(dot(x, w) == 11.0);
}

TEST_CASE("elementwise arithmetic and shape mismatch") {
  Tensor a({3}, {1, 2, 3});
  Tensor b({3}, {10, 20, 30});
  Tensor c = a + b;
  CHECK(c[2] == 33);
  Tensor d = b - a;
  CHECK(d[0] == 9);
  Tensor e = 2.0 * a;
  CHECK(e[1] == 4);
  Tensor wrong({2}, {1, 2});
  CHECK_THROWS_AS(a + wrong, ShapeError);
  CHECK_THROWS_AS(a - wrong, ShapeError);
  CHECK_THROWS_AS(dot(a, wrong), ShapeError);
}

TEST_CASE("axpy accumulates in place") {
  Tensor x({2}, {1, -1});
  Tensor y({2}, {10, 10});
  axpy(3.0, x, y);
  CHECK(y[0] == 13);
  CHECK(y[1] == 7);
}

TEST_CASE("norms") {
  Tensor v({2}, {3, -4});
  CHECK(norm2(v) == 5.0);
  CHECK(norm_inf(v) == 4.0);
  CHECK(norm1(v) == 7.0);
}

TEST_CASE("sign maps zero to zero") {
  Tensor v({4}, {2.5, -0.1, 0.0, -0.0});
  Tensor s = sign(v);
  CHECK(s[0] == 1);
  CHECK(s[1] == -1);
  CHECK(s[2] == 0);
  CHECK(s[3] == 0);
}

TEST_CASE("argmax takes the first maximum") {
  Tensor v({4}, {1, 7, 7, 2});
  CHECK(argmax(v) == 1);
}

TEST_CASE("finiteness policy: poisoned values are caught, never propagated") {
  Tensor ok({2}, {1, 2});
  CHECK(all_finite(ok));
  CHECK_NOTHROW(check_finite(ok, "here"));
  Tensor bad({2}, {1, std::nan("")});
  CHECK_FALSE(all_finite(bad));
  CHECK_THROWS_AS(check_finite(bad, "loss head"), NonFiniteError);
  try {
    check_finite(bad, "loss head");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("loss head") != std::string::npos);
  }
}

TEST_CASE("shape_to_string is readable") {
  CHECK(shape_to_string({2, 3}) == "{2,3}");
}

}  // TEST_SUITE
