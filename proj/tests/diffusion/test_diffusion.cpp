#include <cmath>

#include "doctest.h"
#include "dyndiff/diffusion/process.hpp"
#include "dyndiff/diffusion/schedule.hpp"
#include "dyndiff/numerics/ops.hpp"
#include "../support/monte_carlo.hpp"

using namespace dyndiff::diffusion;
using dyndiff::Rng;
using dyndiff::numerics::Shape;
using dyndiff::numerics::Tensor;
using TD = Tensor<double>;

namespace {
const NoiseSchedule kPaper = NoiseSchedule::linear(50, 1e-4, 0.5);
}

TEST_CASE("schedule endpoints and derived arrays") {
  CHECK(kPaper.steps() == 50);
  CHECK(kPaper.beta(1) == 1e-4);
  CHECK(kPaper.beta(50) == 0.5);
  CHECK(kPaper.alpha_bar(1) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  for (int s = 1; s <= 50; ++s) {
    CHECK(kPaper.beta(s) > 0.0);
    CHECK(kPaper.beta(s) < 1.0);
    CHECK(kPaper.alpha(s) == 1.0 - kPaper.beta(s));
    CHECK(kPaper.sigma(s) * kPaper.sigma(s) == doctest::Approx(kPaper.beta(s)).epsilon(1e-14));
    if (s > 1) {
      CHECK(kPaper.beta(s) >= kPaper.beta(s - 1));
      CHECK(kPaper.alpha_bar(s) < kPaper.alpha_bar(s - 1));
    }
  }
}

TEST_CASE("final alpha_bar of the default schedule") {
  // numpy: cumprod(1 - linspace(1e-4, 0.5, 50))[-1]
  CHECK(kPaper.alpha_bar(50) == doctest::Approx(2.078874355840324e-07).epsilon(1e-9));
  CHECK(kPaper.alpha_bar(50) < 1e-6);
}

TEST_CASE("single-step schedule") {
  auto s = NoiseSchedule::linear(1, 0.02, 0.3);
  CHECK(s.steps() == 1);
  CHECK(s.beta(1) == 0.02);
  CHECK(s.alpha_bar(1) == 1.0 - 0.02);
}

TEST_CASE("schedule rejects invalid bounds and steps") {
  CHECK_THROWS_AS(NoiseSchedule::linear(0, 1e-4, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.6, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(kPaper.beta(0), std::out_of_range);
  CHECK_THROWS_AS(kPaper.beta(51), std::out_of_range);
}

TEST_CASE("q_sample without noise scales the signal") {
  auto x0 = TD::from_data({3}, {1.0, -2.0, 0.5});
  auto zero = TD::zeros({3});
  for (int s : {1, 17, 50}) {
    auto xs = q_sample(x0, s, zero, kPaper);
    for (std::size_t i = 0; i < 3; ++i) CHECK(xs.data()[i] == std::sqrt(kPaper.alpha_bar(s)) * x0.data()[i]);
  }
  CHECK_THROWS_AS(q_sample(x0, 1, TD::zeros({2}), kPaper), dyndiff::numerics::ShapeError);
}

TEST_CASE("q_sample at the last step is close to standard normal") {
  Rng rng(123);
  const std::size_t draws = 10000;
  std::vector<double> x0v(4), out[4];
  for (std::size_t j = 0; j < 4; ++j) x0v[j] = rng.normal();
  auto x0 = TD::from_data({4}, x0v);
  for (std::size_t d = 0; d < draws; ++d) {
    std::vector<double> e(4);
    for (auto& v : e) v = rng.normal();
    auto xs = q_sample(x0, 50, TD::from_data({4}, e), kPaper);
    for (std::size_t j = 0; j < 4; ++j) out[j].push_back(xs.data()[j]);
  }
  for (const auto& o : out) {
    auto m = dyndiff::testing::moments(o);
    CHECK(std::abs(m.mean) < 0.05);
    CHECK(std::abs(m.variance - 1.0) < 0.1);
  }
}

TEST_CASE("closed form agrees with the iterated one-step chain") {
  const auto betas = dyndiff::testing::linspace_betas(10, 1e-4, 0.5);
  auto sched = NoiseSchedule::linear(10, 1e-4, 0.5);
  const double x0 = 1.7;
  const std::size_t draws = 10000;
  for (int s = 1; s <= 10; ++s) {
    CHECK(sched.alpha_bar(s) == doctest::Approx(dyndiff::testing::alpha_bar_product(betas, s)).epsilon(1e-12));
    Rng chain_rng = Rng::derive(99, static_cast<std::uint64_t>(s));
    auto chain = dyndiff::testing::moments(dyndiff::testing::iterate_forward_chain(x0, betas, s, draws, chain_rng));
    const double mean = std::sqrt(sched.alpha_bar(s)) * x0;
    const double var = 1.0 - sched.alpha_bar(s);
    CHECK(std::abs(chain.mean - mean) <= 3.0 * chain.mean_standard_error());
    CHECK(std::abs(chain.variance - var) <= 3.0 * chain.variance_standard_error());

    Rng closed_rng = Rng::derive(7, static_cast<std::uint64_t>(s));
    std::vector<double> closed(draws);
    for (auto& v : closed) {
      auto xs = q_sample(TD::from_data({1}, {x0}), s, TD::from_data({1}, {closed_rng.normal()}), sched);
      v = xs.item();
    }
    auto cm = dyndiff::testing::moments(closed);
    CHECK(std::abs(cm.mean - mean) <= 3.0 * cm.mean_standard_error());
    CHECK(std::abs(cm.variance - var) <= 3.0 * cm.variance_standard_error());
  }
}

TEST_CASE("noised batch reconstructs from its fields") {
  Rng rng(5);
  std::vector<double> x(6 * 10);
  for (auto& v : x) v = rng.normal();
  auto x0 = TD::from_data({6, 10, 1}, x);
  auto batch = draw_noised_batch(x0, kPaper, rng);
  REQUIRE(batch.steps.size() == 6);
  for (std::size_t b = 0; b < 6; ++b) {
    const int s = batch.steps[b];
    CHECK(s >= 1);
    CHECK(s <= 50);
    const double a = std::sqrt(kPaper.alpha_bar(s)), c = std::sqrt(1.0 - kPaper.alpha_bar(s));
    for (std::size_t i = b * 10; i < (b + 1) * 10; ++i)
      CHECK(batch.xs.data()[i] == a * batch.x0.data()[i] + c * batch.eps.data()[i]);
  }
}

TEST_CASE("reverse step on a hand-computed scalar") {
  auto c = ReverseCoefficients::from(0.99, 0.9, 0.0);
  auto out = reverse_step(TD::from_data({1}, {1.0}), TD::from_data({1}, {0.5}), c, TD{});
  // (1 / sqrt(0.99)) * (1 - 0.01 / sqrt(0.1) * 0.5) = 0.98914677...
  CHECK(out.item() == doctest::Approx(0.98914677).epsilon(1e-4));
}

TEST_CASE("reverse step tends to the identity as beta vanishes") {
  auto tiny = NoiseSchedule::linear(3, 1e-12, 1e-12);
  auto xs = TD::from_data({2}, {0.3, -1.1});
  auto out = reverse_step(xs, 2, TD::zeros({2}), tiny, TD::zeros({2}));
  CHECK(out.data()[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(out.data()[1] == doctest::Approx(-1.1).epsilon(1e-9));
}

TEST_CASE("final reverse step is deterministic") {
  auto xs = TD::from_data({2}, {0.3, -1.1});
  auto eps = TD::from_data({2}, {0.1, 0.2});
  CHECK_THROWS_AS(reverse_step(xs, 1, eps, kPaper, TD::from_data({2}, {0.0, 1.0})), std::invalid_argument);
  auto a = reverse_step(xs, 1, eps, kPaper, TD{});
  auto b = reverse_step(xs, 1, eps, kPaper, TD::zeros({2}));
  CHECK(a.data()[0] == b.data()[0]);
  CHECK_THROWS_AS(reverse_step(xs, 2, eps, kPaper, TD{}), std::invalid_argument);
  CHECK_THROWS_AS(reverse_step(xs, 0, eps, kPaper, TD::zeros({2})), std::out_of_range);
  CHECK_THROWS_AS(reverse_step(xs, 51, eps, kPaper, TD::zeros({2})), std::out_of_range);
}

TEST_CASE("reverse step is affine with the exact coefficients") {
  const int s = 20;
  const double a = kPaper.alpha(s), ab = kPaper.alpha_bar(s);
  const double cx = 1.0 / std::sqrt(a);
  const double ce = -(1.0 - a) / (std::sqrt(1.0 - ab) * std::sqrt(a));
  const double cz = std::sqrt(kPaper.beta(s));
  auto zero = TD::zeros({3});
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> u(3, 0.0);
    u[i] = 1.0;
    auto unit = TD::from_data({3}, u);
    auto ox = reverse_step(unit, s, zero, kPaper, zero);
    auto oe = reverse_step(zero, s, unit, kPaper, zero);
    auto oz = reverse_step(zero, s, zero, kPaper, unit);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(ox.data()[j] == doctest::Approx(i == j ? cx : 0.0).epsilon(1e-14));
      CHECK(oe.data()[j] == doctest::Approx(i == j ? ce : 0.0).epsilon(1e-14));
      CHECK(oz.data()[j] == doctest::Approx(i == j ? cz : 0.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("training loss bounds and limits") {
  Rng rng(31);
  std::vector<double> x(64 * 64);
  for (auto& v : x) v = rng.normal();
  auto x0 = TD::from_data({64, 64, 1}, x);
  auto batch = draw_noised_batch(x0, kPaper, rng);
  auto latent = TD::zeros({64, 4});

  NoisePredictor<double> perfect = [&](const TD&, const std::vector<int>&, const TD&) { return batch.eps; };
  CHECK(training_loss(batch, latent, perfect).item() == 0.0);

  NoisePredictor<double> zero = [&](const TD& xs, const std::vector<int>&, const TD&) {
    return TD::zeros(xs.shape());
  };
  const double l0 = training_loss(batch, latent, zero).item();
  CHECK(l0 >= 0.0);
  CHECK(std::abs(l0 - 1.0) < 0.05);

  NoisePredictor<double> nudged = [&](const TD&, const std::vector<int>&, const TD&) {
    auto e = batch.eps.detach();
    e.mutable_data()[17] += 1e-4;
    return e;
  };
  const double l1 = training_loss(batch, latent, nudged).item();
  CHECK(l1 > 0.0);
  CHECK(l1 < 1e-10);

  NoisePredictor<double> wrong = [&](const TD&, const std::vector<int>&, const TD&) { return TD::zeros({1}); };
  CHECK_THROWS_AS(training_loss(batch, latent, wrong), dyndiff::numerics::ShapeError);
}
