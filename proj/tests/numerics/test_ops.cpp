#include <cmath>
#include <limits>

#include "doctest.h"
#include "dyndiff/numerics/ops.hpp"
#include "dyndiff/rng.hpp"
#include "../support/gradient_cases.hpp"

using namespace dyndiff::numerics;
using dyndiff::Rng;
using dyndiff::testing::random_tensor;
using TD = Tensor<double>;
using TF = Tensor<float>;

TEST_CASE("dense with identity weight and zero bias returns its input") {
  auto x = TF::from_data({2}, {0.5f, -3.0f});
  auto w = TF::from_data({2, 2}, {1, 0, 0, 1});
  auto b = TF::zeros({2});
  auto y = dense(x, w, b);
  CHECK(y.shape() == Shape{2});
  CHECK(y.data()[0] == 0.5f);
  CHECK(y.data()[1] == -3.0f);
}

TEST_CASE("causal conv with a single unit tap is the identity") {
  auto x = TF::from_data({1, 4, 1}, {1, 2, 3, 4});
  auto w = TF::from_data({1, 1, 1}, {1});
  auto y = conv1d(x, w, TF{}, 2, Padding::causal);
  REQUIRE(y.shape() == Shape{1, 4, 1});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == static_cast<float>(i + 1));
}

TEST_CASE("causal conv matches a direct sum with left zero padding") {
  Rng rng(3);
  auto x = random_tensor({2, 9, 3}, rng, false);
  auto w = random_tensor({3, 3, 2}, rng, false);
  auto b = random_tensor({2}, rng, false);
  const std::size_t d = 2;
  auto y = conv1d(x, w, b, d, Padding::causal);
  for (std::size_t bb = 0; bb < 2; ++bb)
    for (std::size_t t = 0; t < 9; ++t)
      for (std::size_t o = 0; o < 2; ++o) {
        double expect = b.data()[o];
        for (std::size_t k = 0; k < 3; ++k) {
          long src = static_cast<long>(t) - static_cast<long>((2 - k) * d);
          if (src < 0) continue;
          for (std::size_t i = 0; i < 3; ++i)
            expect += x.data()[(bb * 9 + src) * 3 + i] * w.data()[(k * 3 + i) * 2 + o];
        }
        CHECK(y.data()[(bb * 9 + t) * 2 + o] == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("same-padded conv is centred") {
  auto x = TD::from_data({1, 5, 1}, {1, 2, 3, 4, 5});
  // taps pick (t - 2, t, t + 2) with weights (1, 10, 100)
  auto w = TD::from_data({3, 1, 1}, {1, 10, 100});
  auto y = conv1d(x, w, TD{}, 2, Padding::same);
  const double expect[] = {10 + 300, 20 + 400, 1 + 30 + 500, 2 + 40, 3 + 50};
  for (std::size_t t = 0; t < 5; ++t) CHECK(y.data()[t] == expect[t]);
  CHECK_THROWS_AS(conv1d(x, TD::zeros({2, 1, 1}), TD{}, 1, Padding::same), ShapeError);
}

TEST_CASE("causal conv output at time i ignores inputs after i") {
  Rng rng(11);
  auto w = random_tensor({3, 2, 2}, rng, false);
  auto base = random_tensor({1, 12, 2}, rng, false);
  auto y0 = conv1d(base, w, TD{}, 2, Padding::causal);
  for (std::size_t i = 0; i < 12; ++i) {
    auto changed = base.detach();
    for (std::size_t t = i + 1; t < 12; ++t)
      for (std::size_t c = 0; c < 2; ++c) changed.mutable_data()[t * 2 + c] += 7.0;
    auto y1 = conv1d(changed, w, TD{}, 2, Padding::causal);
    for (std::size_t t = 0; t <= i; ++t)
      for (std::size_t c = 0; c < 2; ++c) CHECK(y1.data()[t * 2 + c] == y0.data()[t * 2 + c]);
  }
}

TEST_CASE("conv rejects zero dilation") {
  auto x = TD::zeros({1, 3, 1});
  CHECK_THROWS_AS(conv1d(x, TD::zeros({2, 1, 1}), TD{}, 0, Padding::causal), std::invalid_argument);
}

TEST_CASE("layer norm of a constant vector yields the bias") {
  auto x = TF::full({1, 4}, 3.5f);
  auto gamma = TF::from_data({4}, {2, 2, 2, 2});
  auto beta = TF::from_data({4}, {0.1f, 0.2f, 0.3f, 0.4f});
  auto y = layer_norm(x, gamma, beta);
  for (std::size_t j = 0; j < 4; ++j) CHECK(y.data()[j] == beta.data()[j]);
}

TEST_CASE("layer norm output has zero mean and unit variance before affine") {
  Rng rng(5);
  auto x = random_tensor({3, 16}, rng, false, 4.0);
  auto y = layer_norm(x, TD::full({16}, 1.0), TD::zeros({16}));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 16; ++j) m += y.data()[r * 16 + j];
    m /= 16;
    for (std::size_t j = 0; j < 16; ++j) v += std::pow(y.data()[r * 16 + j] - m, 2);
    v /= 16;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(9);
  auto x = random_tensor({5, 7}, rng, false, 10.0);
  auto y = softmax(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      CHECK(y.data()[r * 7 + j] >= 0.0);
      total += y.data()[r * 7 + j];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("attention weights sum to one for every query") {
  Rng rng(2);
  auto q = random_tensor({2, 5, 8}, rng, false);
  auto k = random_tensor({2, 5, 8}, rng, false);
  auto v = random_tensor({2, 5, 8}, rng, false);
  auto r = scaled_dot_product_attention(q, k, v, 4);
  CHECK(r.output.shape() == Shape{2, 5, 8});
  CHECK(r.weights.shape() == Shape{8, 5, 5});
  for (std::size_t row = 0; row < 8 * 5; ++row) {
    double total = 0;
    for (std::size_t j = 0; j < 5; ++j) total += r.weights.data()[row * 5 + j];
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("activations") {
  auto x = TD::from_data({4}, {-2.0, -0.5, 0.0, 1.5});
  auto r = relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[3] == 1.5);
  auto s = silu(x);
  CHECK(s.data()[2] == 0.0);
  CHECK(s.data()[3] == doctest::Approx(1.5 / (1.0 + std::exp(-1.5))));
  CHECK(s.data()[0] == doctest::Approx(-2.0 / (1.0 + std::exp(2.0))));
}

TEST_CASE("reductions and shape utilities") {
  auto a = TD::from_data({2, 2}, {1, 2, 3, 4});
  auto b = TD::from_data({2, 2}, {1, 0, 3, 2});
  CHECK(sum(a).item() == 10.0);
  CHECK(mean(a).item() == 2.5);
  CHECK(mse(a, b).item() == doctest::Approx((0 + 4 + 0 + 4) / 4.0));
  auto c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 4});
  CHECK(c.data()[2] == 1.0);
  CHECK(c.data()[4] == 3.0);
  auto s = select(c, 1, 3);
  CHECK(s.shape() == Shape{2});
  CHECK(s.data()[0] == 0.0);
  CHECK(s.data()[1] == 2.0);
  auto v = TD::from_data({2}, {10, 20});
  auto bc = add_broadcast(a, v);
  CHECK(bc.data()[3] == 24.0);
  auto x3 = TD::zeros({2, 3, 2});
  auto ot = add_over_time(x3, TD::from_data({2, 2}, {1, 2, 3, 4}));
  CHECK(ot.data()[2 * 2 + 1] == 2.0);
  CHECK(ot.data()[(3 + 2) * 2 + 0] == 3.0);
}

TEST_CASE("shape errors name the operator and both shapes") {
  auto a = TD::zeros({2, 3});
  auto b = TD::zeros({3, 2});
  try {
    add(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(dense(a, TD::zeros({2, 2}), TD{}), ShapeError);
  CHECK_THROWS_AS(layer_norm(a, TD::zeros({2}), TD::zeros({3})), ShapeError);
  CHECK_THROWS_AS(split_heads(TD::zeros({1, 2, 6}), 4), ShapeError);
  CHECK_THROWS_AS(TD::from_data({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("non-finite results are surfaced as errors") {
  auto x = TF::from_data({2}, {1.0f, 2.0f});
  CHECK_THROWS_AS(scale(x, std::numeric_limits<float>::infinity()), NumericError);
  auto big = TF::from_data({1}, {3e38f});
  CHECK_THROWS_AS(add(big, big), NumericError);
}

TEST_CASE("forward evaluation is bit-deterministic") {
  Rng rng(4);
  auto x = random_tensor({2, 6, 4}, rng, false);
  auto w = random_tensor({3, 4, 4}, rng, false);
  auto run = [&] {
    auto h = silu(conv1d(x, w, TD{}, 2, Padding::same));
    return scaled_dot_product_attention(h, h, h, 2).output;
  };
  auto a = run();
  auto b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("batched evaluation equals per-item evaluation bit for bit") {
  Rng rng(8);
  auto x = random_tensor({3, 5, 4}, rng, false);
  auto w = random_tensor({4, 6}, rng, false);
  auto k = random_tensor({3, 4, 4}, rng, false);
  auto full = dense(conv1d(x, k, TD{}, 1, Padding::same), w, TD{});
  for (std::size_t b = 0; b < 3; ++b) {
    auto one = dense(conv1d(slice(x, 0, b, 1), k, TD{}, 1, Padding::same), w, TD{});
    for (std::size_t i = 0; i < one.numel(); ++i) CHECK(one.data()[i] == full.data()[b * one.numel() + i]);
  }
}
