#include <cmath>

#include "doctest.h"
#include "dyndiff/denoiser/denoiser.hpp"
#include "dyndiff/numerics/grad_check.hpp"
#include "dyndiff/numerics/ops.hpp"
#include "../support/model_cases.hpp"

using namespace dyndiff::denoiser;
using dyndiff::Rng;
using dyndiff::numerics::ParameterStore;
using dyndiff::numerics::Shape;
using dyndiff::testing::random_tensor;
using TD = dyndiff::numerics::Tensor<double>;

namespace {

DenoiserConfig config(std::size_t n, std::size_t p, std::size_t d = 16) {
  DenoiserConfig cfg;
  cfg.n_vars = n;
  cfg.horizon = p;
  cfg.d_model = d;
  cfg.heads = 2;
  cfg.res_blocks = 2;
  cfg.ff_dim = 2 * d;
  return cfg;
}

double l2_gap(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("step embedding at zero") {
  auto e = embed_step(0, 16);
  REQUIRE(e.vec.size() == 16);
  for (std::size_t i = 0; i < 16; i += 2) {
    CHECK(e.vec[i] == 0.0);
    CHECK(e.vec[i + 1] == 1.0);
  }
}

TEST_CASE("step embedding formula and range") {
  for (int s : {1, 7, 50, 1000}) {
    auto e = embed_step(s, 128);
    for (std::size_t i = 0; i < 64; ++i) {
      const double arg = s / std::pow(10000.0, 2.0 * i / 128.0);
      CHECK(e.vec[2 * i] == doctest::Approx(std::sin(arg)).epsilon(1e-15));
      CHECK(e.vec[2 * i + 1] == doctest::Approx(std::cos(arg)).epsilon(1e-15));
    }
    for (double v : e.vec) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("fifty step embeddings are pairwise distinct") {
  std::vector<StepEmbedding> all;
  for (int s = 1; s <= 50; ++s) all.push_back(embed_step(s, 128));
  double min_gap = 1e300;
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) min_gap = std::min(min_gap, l2_gap(all[a].vec, all[b].vec));
  CHECK(min_gap > 0.0);
}

TEST_CASE("step embedding errors") {
  CHECK_THROWS_AS(embed_step(3, 15), std::invalid_argument);
  CHECK_THROWS_AS(embed_step(-1, 16), std::invalid_argument);
}

TEST_CASE("config validation") {
  auto cfg = config(1, 10);
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = config(1, 10, 15);
  cfg.heads = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = config(1, 10);
  cfg.kernel = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("output shape equals input shape") {
  for (auto [n, p] : {std::pair<std::size_t, std::size_t>{1, 10}, {3, 10}, {2, 1}}) {
    Rng rng(n * 31 + p);
    auto cfg = config(n, p);
    ParameterStore<double> params;
    init_denoiser(cfg, params, rng);
    auto xs = random_tensor({p, n}, rng, false);
    dyndiff::encoder::LatentContext<double> e{random_tensor({16}, rng, false), 0};
    auto out = predict_noise(xs, 12, e, cfg, params);
    CHECK(out.shape() == Shape{p, n});
    auto batched = predict_noise(random_tensor({5, p, n}, rng, false), std::vector<int>{1, 2, 3, 4, 5},
                                 random_tensor({5, 16}, rng, false), cfg, params);
    CHECK(batched.shape() == Shape{5, p, n});
  }
}

TEST_CASE("predict_noise is deterministic and batch-invariant") {
  Rng rng(3);
  auto cfg = config(2, 10, 32);
  ParameterStore<float> params;
  init_denoiser(cfg, params, rng);
  std::vector<float> xv(6 * 10 * 2), lv(6 * 32);
  for (auto& v : xv) v = static_cast<float>(rng.normal());
  for (auto& v : lv) v = static_cast<float>(rng.normal());
  auto xs = dyndiff::numerics::Tensor<float>::from_data({6, 10, 2}, xv);
  auto lat = dyndiff::numerics::Tensor<float>::from_data({6, 32}, lv);
  const std::vector<int> steps{1, 10, 20, 30, 40, 50};
  auto a = predict_noise(xs, steps, lat, cfg, params);
  auto b = predict_noise(xs, steps, lat, cfg, params);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  for (std::size_t i = 0; i < 6; ++i) {
    auto one = predict_noise(dyndiff::numerics::slice(xs, 0, i, 1), std::vector<int>{steps[i]},
                             dyndiff::numerics::slice(lat, 0, i, 1), cfg, params);
    CHECK(std::equal(one.data().begin(), one.data().end(), a.data().begin() + i * 20));
  }
}

TEST_CASE("conditioning injection") {
  Rng rng(4);
  ParameterStore<double> params;
  auto cfg = config(1, 4);
  init_denoiser(cfg, params, rng);
  auto h = random_tensor({2, 4, 16}, rng, false);
  auto out = condition_inject(h, TD::zeros({2, 16}), TD::zeros({2, 16}), params, "denoiser.cond0.");
  CHECK(std::equal(out.data().begin(), out.data().end(), h.data().begin()));

  auto emb = embed_steps<double>({5, 5}, 16);
  auto e1 = random_tensor({2, 16}, rng, false);
  auto e2 = random_tensor({2, 16}, rng, false);
  auto o1 = condition_inject(h, e1, emb, params, "denoiser.cond0.");
  auto o2 = condition_inject(h, e2, emb, params, "denoiser.cond0.");
  CHECK(l2_gap(o1.data(), o2.data()) > 0.0);
  CHECK_THROWS_AS(condition_inject(h, TD::zeros({2, 8}), emb, params, "denoiser.cond0."),
                  dyndiff::numerics::ShapeError);
}

TEST_CASE("different latents change the predicted noise") {
  Rng rng(5);
  ParameterStore<double> params;
  auto cfg = config(2, 10);
  init_denoiser(cfg, params, rng);
  auto xs = random_tensor({10, 2}, rng, false);
  dyndiff::encoder::LatentContext<double> e1{random_tensor({16}, rng, false), 0};
  dyndiff::encoder::LatentContext<double> e2{random_tensor({16}, rng, false), 0};
  auto a = predict_noise(xs, 25, e1, cfg, params);
  auto b = predict_noise(xs, 25, e2, cfg, params);
  CHECK(l2_gap(a.data(), b.data()) > 0.0);
  dyndiff::encoder::LatentContext<double> wrong{random_tensor({8}, rng, false), 0};
  CHECK_THROWS_AS(predict_noise(xs, 25, wrong, cfg, params), dyndiff::numerics::ShapeError);
}

TEST_CASE("attention rows are probability vectors") {
  Rng rng(6);
  ParameterStore<double> params;
  auto cfg = config(3, 10);
  init_denoiser(cfg, params, rng);
  DenoiserTrace<double> trace;
  predict_noise(random_tensor({4, 10, 3}, rng, false), std::vector<int>{1, 9, 27, 50},
                random_tensor({4, 16}, rng, false), cfg, params, &trace);
  REQUIRE(trace.attention.shape() == Shape{8, 10, 10});
  for (std::size_t r = 0; r < 80; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      const double w = trace.attention.data()[r * 10 + j];
      CHECK(w >= 0.0);
      s += w;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("every parameter receives gradient at initialisation") {
  Rng rng(7);
  ParameterStore<float> params;
  dyndiff::encoder::EncoderConfig ecfg;
  ecfg.in_vars = 2;
  ecfg.channels = 8;
  ecfg.layers = 3;
  ecfg.latent_dim = 32;
  auto dcfg = config(2, 10, 32);
  dyndiff::encoder::init_encoder(ecfg, params, rng);
  init_denoiser(dcfg, params, rng);
  auto rnd = [&rng](dyndiff::numerics::Shape s) {
    std::vector<float> v(dyndiff::numerics::numel(s));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return dyndiff::numerics::Tensor<float>::from_data(s, v);
  };
  std::vector<int> steps(16);
  for (auto& s : steps) s = static_cast<int>(rng.uniform_int(1, 50));
  auto latent = dyndiff::encoder::encode_batch(rnd({16, 40, 2}), ecfg, params);
  auto loss = dyndiff::numerics::mse(rnd({16, 10, 2}), predict_noise(rnd({16, 10, 2}), steps, latent, dcfg, params));
  loss.backward();
  for (const auto& [name, t] : params) {
    double norm = 0.0;
    for (float g : t.grad()) norm += static_cast<double>(g) * g;
    INFO(name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("shape errors on malformed inputs") {
  Rng rng(8);
  ParameterStore<double> params;
  auto cfg = config(2, 4);
  init_denoiser(cfg, params, rng);
  CHECK_THROWS_AS(predict_noise(random_tensor({1, 5, 2}, rng, false), std::vector<int>{1},
                                random_tensor({1, 16}, rng, false), cfg, params),
                  dyndiff::numerics::ShapeError);
  CHECK_THROWS_AS(predict_noise(random_tensor({2, 4, 2}, rng, false), std::vector<int>{1},
                                random_tensor({2, 16}, rng, false), cfg, params),
                  dyndiff::numerics::ShapeError);
  CHECK_THROWS_AS(predict_noise(random_tensor({2, 4, 2}, rng, false), std::vector<int>{1, 2},
                                random_tensor({2, 12}, rng, false), cfg, params),
                  dyndiff::numerics::ShapeError);
}

TEST_CASE("full model gradients pass the finite-difference check") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    auto gc = dyndiff::testing::denoiser_case(rng);
    auto report = dyndiff::numerics::grad_check<double>(gc.loss, gc.inputs, 1e-4, 1e-4);
    INFO("seed " << seed << " worst " << report.worst_parameter << " rel " << report.max_rel_error);
    CHECK(report.passed);
  }
}
