#include "doctest.h"
#include "dyndiff/numerics/ops.hpp"
#include "dyndiff/numerics/parameters.hpp"

using namespace dyndiff::numerics;
using TD = Tensor<double>;

TEST_CASE("gradient of sum of squares") {
  auto x = TD::from_data({2}, {1.0, 2.0}, true);
  sum(mul(x, x)).backward();
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("mse of a zero linear map against targets") {
  // loss = mean_{r,j} (x_r W - y_r)_j^2 at W = 0 gives
  // dL/dW_kj = -2 / (R * N) * sum_r x_rk y_rj.
  const std::size_t rows = 3, in = 2, out = 4;
  auto x = TD::from_data({rows, in}, {1, 2, -1, 0.5, 3, -2});
  auto y = TD::from_data({rows, out}, {1, 0, -1, 2, 0.5, 1, 1, -3, 2, 2, 0, 1});
  auto w = TD::zeros({in, out}, true);
  mse(matmul(x, w), y).backward();
  for (std::size_t k = 0; k < in; ++k)
    for (std::size_t j = 0; j < out; ++j) {
      double expect = 0;
      for (std::size_t r = 0; r < rows; ++r) expect += x.data()[r * in + k] * y.data()[r * out + j];
      expect *= -2.0 / static_cast<double>(rows * out);
      CHECK(w.grad()[k * out + j] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("unreachable parameters keep zero gradient") {
  ParameterStore<double> store;
  auto& used = store.add_constant("used", {3}, 1.5);
  store.add_constant("unused", {3}, 2.0);
  store.zero_grad();
  sum(mul(used, used)).backward();
  CHECK(store.at("used").grad()[0] == 3.0);
  const auto& g = store.at("unused").grad();
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses and repeated calls") {
  auto x = TD::from_data({2}, {1.0, 2.0}, true);
  auto y = mul(x, x);
  CHECK_THROWS_AS(y.backward(), GraphError);
  auto loss = sum(y);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), GraphError);
  auto constant = TD::scalar(1.0);
  CHECK_THROWS_AS(constant.backward(), GraphError);
}

TEST_CASE("gradients accumulate until zeroed") {
  auto x = TD::from_data({1}, {3.0}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("no-grad guard records nothing") {
  auto x = TD::from_data({1}, {3.0}, true);
  TD y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(y.backward(), GraphError);
}

TEST_CASE("interior tensors are read-only") {
  auto x = TD::from_data({1}, {3.0}, true);
  auto y = mul(x, x);
  CHECK_THROWS_AS(y.mutable_data(), GraphError);
}

TEST_CASE("parameter names are unique") {
  ParameterStore<float> store;
  store.add_zeros("a.b", {2});
  CHECK_THROWS_AS(store.add_zeros("a.b", {2}), std::invalid_argument);
  CHECK(store.parameter_count() == 2);
}
