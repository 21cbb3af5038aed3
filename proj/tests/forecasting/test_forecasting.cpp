#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dyndiff/data/checkpoint.hpp"
#include "dyndiff/forecasting/sampling.hpp"
#include "dyndiff/numerics/ops.hpp"
#include "../support/run_cases.hpp"

using namespace dyndiff::forecasting;
using dyndiff::Rng;
using dyndiff::data::SynthKind;
using dyndiff::testing::synth_data;
using dyndiff::testing::tiny_run;
using TF = dyndiff::numerics::Tensor<float>;

namespace {

struct Fitted {
  PreparedData data;
  FitResult fit;
};

Fitted fitted(SynthKind kind, RunConfig cfg, std::uint64_t data_seed = 3) {
  auto data = synth_data(kind, 600, data_seed, cfg);
  auto result = fit(data, cfg);
  return {std::move(data), std::move(result)};
}

TF standardized_context(const TrainedModel& trained, const dyndiff::data::TimeSeriesFrame& raw, std::size_t end) {
  const std::size_t c = trained.config.train.context, m = trained.variables.size();
  std::vector<float> v(c * m);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < m; ++j)
      v[i * m + j] = static_cast<float>(dyndiff::data::standardize_value(raw.at(end - c + i, j), trained.stats[j]));
  return TF::from_data({c, m}, v);
}

bool same_params(const ParameterStore<float>& a, const ParameterStore<float>& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (const auto& [name, t] : a) {
    if (name != ib->first || !std::equal(t.data().begin(), t.data().end(), ib->second.data().begin())) return false;
    ++ib;
  }
  return true;
}

}  // namespace

TEST_CASE("config keys round trip and reject typos") {
  RunConfig cfg;
  cfg.data.targets = {"latency", "load"};
  cfg.set_d_model(48);
  cfg.train.lr = 2.5e-4;
  cfg.train.unconditional = true;
  cfg.eval.horizons = {1, 3};
  RunConfig back;
  apply_key_values(back, to_key_values(cfg));
  CHECK(to_key_values(back) == to_key_values(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.encoder.latent_dim == 48);
  CHECK(config_hash(back).size() == 16);

  back.train.seed = 1;
  CHECK(config_hash(back) != config_hash(cfg));
  CHECK_THROWS_AS(apply_key_values(back, {{"train.lrr", "1"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_values(back, {{"train.batch", "-3"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_values(back, {{"model.d_model", "32"}, {"encoder.latent_dim", "16"}}),
                  std::invalid_argument);
  const auto keys = known_keys();
  for (const char* k : {"train.lr", "train.batch", "train.steps", "train.seed", "train.unconditional",
                        "forecast.samples", "forecast.horizon"})
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}

TEST_CASE("adam first step moves each weight by lr against its gradient sign") {
  ParameterStore<float> params;
  params.add("w", TF::from_data({3}, {1.0f, -2.0f, 0.5f}, true));
  auto& w = params.at("w");
  auto g = w.mutable_grad();
  g[0] = 0.3f;
  g[1] = -4.0f;
  g[2] = 0.0f;
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(params);
  CHECK(w.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(w.data()[1] == doctest::Approx(-1.99).epsilon(1e-6));
  CHECK(w.data()[2] == 0.5f);
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("gradient clipping caps the global norm") {
  ParameterStore<float> params;
  params.add("a", TF::from_data({2}, {0.0f, 0.0f}, true));
  params.add("b", TF::from_data({1}, {0.0f}, true));
  params.at("a").mutable_grad()[0] = 3.0f;
  params.at("a").mutable_grad()[1] = 0.0f;
  params.at("b").mutable_grad()[0] = 4.0f;
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(5.0));
  CHECK(params.grad_norm() == doctest::Approx(5.0));
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params.grad_norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(params.at("b").grad()[0] == doctest::Approx(0.8f));
}

TEST_CASE("fixed seed gives a bit-identical loss trace and weights") {
  auto cfg = tiny_run();
  cfg.train.seed = 11;
  auto a = fitted(SynthKind::ar2_seasonal, cfg);
  auto b = fitted(SynthKind::ar2_seasonal, cfg);
  REQUIRE(a.fit.log.size() == cfg.train.steps);
  CHECK(format_train_log(a.fit.log) == format_train_log(b.fit.log));
  CHECK(same_params(a.fit.trained.model.params(), b.fit.trained.model.params()));
  CHECK(a.fit.trained.rng_state == b.fit.trained.rng_state);

  cfg.train.seed = 12;
  auto c = fitted(SynthKind::ar2_seasonal, cfg);
  CHECK(format_train_log(a.fit.log) != format_train_log(c.fit.log));
  CHECK(!std::isnan(a.fit.log.back().val_loss));
}

TEST_CASE("unconditional mode gives the encoder no gradient") {
  auto cfg = tiny_run();
  cfg.train.unconditional = true;
  auto data = synth_data(SynthKind::ar2_seasonal, 600, 3, cfg);
  auto spec = model_spec(cfg, 2, 1);
  Rng rng(5);
  auto model = Model::initialize(spec, rng);
  auto frame = std::make_shared<const dyndiff::data::TimeSeriesFrame>(
      dyndiff::data::standardize(data.split.train, data.stats));
  dyndiff::data::WindowSet windows(frame, cfg.train.context, cfg.train.horizon);
  std::vector<std::size_t> idx{0, 7, 30};
  auto batch = dyndiff::diffusion::draw_noised_batch(windows.targets<float>(idx), model.schedule(), rng);
  model.params().zero_grad();
  model.loss(batch, windows.contexts<float>(idx)).backward();

  double encoder_sq = 0.0, baseline_sq = 0.0;
  for (const auto& [name, t] : model.params()) {
    double s = 0.0;
    for (float g : t.grad()) s += static_cast<double>(g) * g;
    if (name.rfind("encoder.", 0) == 0) encoder_sq += s;
    if (name == kBaselineLatent) baseline_sq = s;
  }
  CHECK(encoder_sq == 0.0);
  CHECK(baseline_sq > 0.0);

  // The context does not influence the prediction at all.
  dyndiff::numerics::NoGradGuard guard;
  auto ctx = windows.contexts<float>(idx);
  auto other = windows.contexts<float>({100, 101, 102});
  auto e1 = model.latent(ctx), e2 = model.latent(other);
  CHECK(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
}

TEST_CASE("training rejects data too short for one window") {
  auto cfg = tiny_run();
  cfg.train.context = 200;
  CHECK_THROWS_AS(synth_data(SynthKind::ar2_seasonal, 600, 3, cfg), std::invalid_argument);
  auto no_targets = tiny_run();
  auto frame = dyndiff::data::synth_generate(SynthKind::random_walk, 300, 1).frame;
  CHECK_THROWS_AS(prepare_data(frame, no_targets), std::invalid_argument);
}

TEST_CASE("runaway learning rate is reported as divergence") {
  auto cfg = tiny_run();
  cfg.train.lr = 1e30;
  cfg.train.steps = 50;
  auto data = synth_data(SynthKind::ar2_seasonal, 600, 3, cfg);
  try {
    fit(data, cfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("grad-norm") != std::string::npos);
  }
}

TEST_CASE("sampling is a pure function of the stream") {
  auto f = fitted(SynthKind::ar2_seasonal, tiny_run());
  const auto& model = f.fit.trained.model;
  auto ctx = standardized_context(f.fit.trained, f.data.raw, 300);
  Rng r1(42), r2(42);
  auto a = sample_once(model, ctx, r1);
  auto b = sample_once(model, ctx, r2);
  CHECK(a.shape() == dyndiff::numerics::Shape{4, 1});
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK(r1.state() == r2.state());
  auto c = sample_once(model, ctx, r1);
  CHECK(!std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST_CASE("single-step schedule makes one noiseless reverse step") {
  auto cfg = tiny_run();
  cfg.diffusion.steps = 1;
  cfg.diffusion.beta_min = cfg.diffusion.beta_max = 0.3;
  auto data = synth_data(SynthKind::ar2_seasonal, 600, 3, cfg);
  auto spec = model_spec(cfg, 2, 1);
  Rng init(1);
  auto model = Model::initialize(spec, init);
  TrainedModel trained{model, cfg, data.raw.names, data.raw.target_names(), data.stats, ""};
  auto ctx = standardized_context(trained, data.raw, 300);

  Rng rng(9), replay(9);
  auto x0 = sample_once(model, ctx, rng);

  dyndiff::numerics::NoGradGuard guard;
  std::vector<float> noise(4);
  for (auto& v : noise) v = static_cast<float>(replay.normal());
  CHECK(rng.state() == replay.state());  // exactly p * n draws, no z
  auto xs = TF::from_data({1, 4, 1}, noise);
  auto latent = model.latent(dyndiff::numerics::reshape(ctx, {1, 24, 2}));
  auto eps = model.predict_noise(xs, {1}, latent);
  const double alpha = 0.7, scale = 0.3 / std::sqrt(0.3);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = (noise[i] - scale * eps.data()[i]) / std::sqrt(alpha);
    CHECK(x0.data()[i] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("ensemble paths are seed-indexed") {
  auto f = fitted(SynthKind::ar2_seasonal, tiny_run());
  const auto& trained = f.fit.trained;
  auto small = forecast_ensemble(trained, f.data.raw, 500, 3, 7, 1);
  auto large = forecast_ensemble(trained, f.data.raw, 500, 6, 7, 1);
  REQUIRE(small.values.size() == 3 * 4);
  CHECK(std::equal(small.values.begin(), small.values.end(), large.values.begin()));
  CHECK(small.origin == f.data.raw.timestamps[499]);
  CHECK(small.variable_names == std::vector<std::string>{"latency"});

  // Path k is sample_once under stream k, whatever order streams are used in.
  auto ctx = standardized_context(trained, f.data.raw, 500);
  for (std::size_t k : {5u, 2u, 0u}) {
    Rng rng = path_rng(7, 500, k);
    auto path = sample_once(trained.model, ctx, rng);
    for (std::size_t t = 0; t < 4; ++t)
      CHECK(large.at(k, t, 0) ==
            dyndiff::data::destandardize(static_cast<double>(path.data()[t]), trained.target_stats(0)));
  }

  auto one = forecast_ensemble(trained, f.data.raw, 500, 1, 7, 1);
  CHECK(one.samples == 1);
  CHECK(std::equal(one.values.begin(), one.values.end(), small.values.begin()));
  for (double v : large.values) CHECK(std::isfinite(v));
}

TEST_CASE("worker count does not change any path") {
  auto f = fitted(SynthKind::ar2_seasonal, tiny_run());
  std::vector<std::size_t> ends{480, 500, 531, 596};
  auto serial = forecast_windows(f.fit.trained, f.data.raw, ends, 20, 4, 3, 1);
  auto threaded = forecast_windows(f.fit.trained, f.data.raw, ends, 20, 4, 3, 3);
  REQUIRE(serial.size() == 4);
  for (std::size_t w = 0; w < 4; ++w) CHECK(serial[w].values == threaded[w].values);
  auto alone = forecast_ensemble(f.fit.trained, f.data.raw, 531, 20, 3, 1);
  CHECK(alone.values == serial[2].values);
}

TEST_CASE("iterative rollout") {
  auto cfg = tiny_run();
  auto f = fitted(SynthKind::random_walk, cfg);
  const auto& trained = f.fit.trained;
  const std::size_t end = 520, p = 4;
  auto base = forecast_ensemble(trained, f.data.raw, end, 5, 2, 1);

  SUBCASE("a horizon within p is a truncation") {
    auto short_run = iterative_forecast(trained, f.data.raw, end, 3, 5, 2, 1);
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t t = 0; t < 3; ++t) CHECK(short_run.at(k, t, 0) == base.at(k, t, 0));
  }

  SUBCASE("2p steps are two generation rounds per member") {
    auto rolled = iterative_forecast(trained, f.data.raw, end, 2 * p, 5, 2, 1);
    REQUIRE(rolled.horizon == 2 * p);
    auto ctx = standardized_context(trained, f.data.raw, end);
    const auto& stats = trained.target_stats(0);
    for (std::size_t k = 0; k < 5; ++k) {
      Rng rng = path_rng(2, end, k);
      auto first = sample_once(trained.model, ctx, rng);
      std::vector<float> next(ctx.data().begin() + p, ctx.data().end());
      next.insert(next.end(), first.data().begin(), first.data().end());
      auto second = sample_once(trained.model, TF::from_data({24, 1}, next), rng);
      for (std::size_t t = 0; t < p; ++t) {
        CHECK(rolled.at(k, t, 0) == dyndiff::data::destandardize(first.data()[t], stats));
        CHECK(rolled.at(k, p + t, 0) == dyndiff::data::destandardize(second.data()[t], stats));
      }
    }
  }

  SUBCASE("covariates that are not forecast cannot be rolled") {
    auto ar = fitted(SynthKind::ar2_seasonal, cfg);
    CHECK_NOTHROW(iterative_forecast(ar.fit.trained, ar.data.raw, end, p, 2, 0, 1));
    try {
      iterative_forecast(ar.fit.trained, ar.data.raw, end, p + 1, 2, 0, 1);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()) == "cannot roll forward unobserved covariates");
    }
  }

  CHECK_THROWS_AS(forecast_ensemble(trained, f.data.raw, 10, 5, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(forecast_ensemble(trained, f.data.raw, end, 0, 2, 1), std::invalid_argument);
}

TEST_CASE("ensemble spread grows across rolling rounds on a random walk") {
  auto cfg = tiny_run();
  cfg.train.steps = 300;
  cfg.train.batch = 16;
  auto f = fitted(SynthKind::random_walk, cfg, 8);
  const std::size_t p = 4, rounds = 3;
  std::vector<double> round_spread(rounds, 0.0);
  const std::vector<std::size_t> ends{500, 540, 580};
  auto ensembles = forecast_windows(f.fit.trained, f.data.raw, ends, 100, rounds * p, 4);
  for (const auto& ens : ensembles) {
    for (std::size_t t = 0; t < rounds * p; ++t) {
      auto cell = ens.cell(t, 0);
      double mean = 0.0, var = 0.0;
      for (double v : cell) mean += v / cell.size();
      for (double v : cell) var += (v - mean) * (v - mean) / (cell.size() - 1);
      round_spread[t / p] += std::sqrt(var);
    }
  }
  MESSAGE("per-round spread: " << round_spread[0] << " " << round_spread[1] << " " << round_spread[2]);
  CHECK(round_spread[1] >= round_spread[0]);
  CHECK(round_spread[2] >= round_spread[1]);
}

TEST_CASE("constant series forecasts stay at the constant") {
  auto cfg = tiny_run();
  cfg.train.steps = 100;
  auto series = dyndiff::data::synth_generate(SynthKind::constant, 600, 0).frame;
  Rng noise(17);
  for (auto& v : series.values) v += 0.01 * noise.normal();
  cfg.data.targets = {"value"};
  auto data = prepare_data(series, cfg);
  auto result = fit(data, cfg);
  auto ens = forecast_ensemble(result.trained, data.raw, 580, 100, 1, 1);
  double mean = 0.0;
  for (double v : ens.values) mean += v / ens.values.size();
  CHECK(std::abs(mean - 5.0) < 0.5);
}

TEST_CASE("trained model survives a checkpoint round trip") {
  auto f = fitted(SynthKind::ar2_seasonal, tiny_run());
  const auto bytes = dyndiff::data::serialize_checkpoint(to_checkpoint(f.fit.trained));
  auto restored = from_checkpoint(dyndiff::data::deserialize_checkpoint(bytes, "<memory>"));
  CHECK(same_params(restored.model.params(), f.fit.trained.model.params()));
  CHECK(config_hash(restored.config) == config_hash(f.fit.trained.config));
  CHECK(restored.targets == f.fit.trained.targets);
  CHECK(dyndiff::data::serialize_checkpoint(to_checkpoint(restored)) == bytes);
  auto a = forecast_ensemble(f.fit.trained, f.data.raw, 560, 4, 9, 1);
  auto b = forecast_ensemble(restored, f.data.raw, 560, 4, 9, 1);
  CHECK(a.values == b.values);

  auto ckpt = to_checkpoint(f.fit.trained);
  ckpt.parameters.pop_back();
  CHECK_THROWS_AS(from_checkpoint(ckpt), std::runtime_error);
  ckpt = to_checkpoint(f.fit.trained);
  ckpt.parameters[0].shape.push_back(1);
  CHECK_THROWS_AS(from_checkpoint(ckpt), std::runtime_error);
}

TEST_CASE("standardize then destandardize is the identity") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const dyndiff::data::VariableStats s{rng.normal() * 100.0, std::exp(rng.normal() * 3.0)};
    const double x = rng.normal() * 1e3;
    const double back = dyndiff::data::destandardize(dyndiff::data::standardize_value(x, s), s);
    CHECK(std::abs(back - x) <= 1e-6 * std::max(1.0, std::abs(x)));
  }
}
