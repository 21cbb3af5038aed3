#include "doctest.h"
#include "dyndiff/numerics/grad_check.hpp"
#include "dyndiff/numerics/ops.hpp"
#include "../support/gradient_cases.hpp"

using namespace dyndiff::numerics;
using dyndiff::Rng;
using dyndiff::testing::random_tensor;
using TD = Tensor<double>;

TEST_CASE("sum of squares passes at 1e-6") {
  Rng rng(1);
  auto x = random_tensor({4, 4}, rng);
  auto report = grad_check<double>([x] { return sum(mul(x, x)); }, {{"x", x}}, 1e-4, 1e-6);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.entries_checked == 16);
}

TEST_CASE("attention block on a 4x8 input") {
  Rng rng(7);
  ParameterStore<double> p;
  const std::size_t d = 8;
  for (const char* name : {"wq", "wk", "wv", "wo"}) p.add_normal(name, {d, d}, 0.4, rng);
  p.add_normal("bo", {d}, 0.1, rng);
  auto x = random_tensor({1, 4, d}, rng, false);
  auto target = random_tensor({1, 4, d}, rng, false);
  auto f = [&]() {
    auto att = scaled_dot_product_attention(dense(x, p.at("wq"), TD{}), dense(x, p.at("wk"), TD{}),
                                            dense(x, p.at("wv"), TD{}), 2);
    return mse(dense(att.output, p.at("wo"), p.at("bo")), target);
  };
  auto report = grad_check<double>(f, p, 1e-4, 1e-4);
  INFO(report.worst_parameter << "[" << report.worst_index << "] " << report.max_rel_error);
  CHECK(report.passed);
}

TEST_CASE("zero tolerance fails on a nonlinear function") {
  Rng rng(3);
  auto x = random_tensor({6}, rng);
  auto report = grad_check<double>([x] { return sum(silu(x)); }, {{"x", x}}, 1e-4, 0.0);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error > 0.0);
}

TEST_CASE("non-deterministic loss is rejected") {
  auto x = TD::from_data({1}, {1.0}, true);
  int calls = 0;
  auto f = [&] { return scale(sum(mul(x, x)), 1.0 + 0.1 * ++calls); };
  CHECK_THROWS_AS(grad_check<double>(f, {{"x", x}}), std::runtime_error);
}

TEST_CASE("every operator matches finite differences over 20 seeds") {
  for (const auto& op : dyndiff::testing::operator_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng = Rng::derive(seed, 17);
      auto c = op.make(rng);
      auto report = grad_check<double>(c.loss, c.inputs, 1e-4, 1e-4);
      worst = std::max(worst, report.max_rel_error);
      INFO(op.name << " seed " << seed << " worst " << report.worst_parameter << "["
                   << report.worst_index << "] analytic " << report.worst_analytic << " numeric "
                   << report.worst_numeric);
      CHECK(report.passed);
    }
    MESSAGE(op.name << ": max rel error " << worst);
  }
}
