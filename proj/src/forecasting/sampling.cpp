#include "dyndiff/forecasting/sampling.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <thread>

#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::forecasting {

std::vector<double> ForecastEnsemble::cell(std::size_t step, std::size_t j) const {
  std::vector<double> out(samples);
  for (std::size_t k = 0; k < samples; ++k) out[k] = at(k, step, j);
  return out;
}

std::size_t sampling_threads() {
  if (const char* env = std::getenv("DYNDIFF_THREADS"); env && *env) {
    std::size_t n = 0;
    const char* end = env + std::strlen(env);
    auto [p, ec] = std::from_chars(env, end, n);
    if (ec != std::errc() || p != end || n == 0)
      throw std::invalid_argument(std::string("DYNDIFF_THREADS must be a positive integer, got '") + env + "'");
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Rng path_rng(std::uint64_t seed, std::uint64_t origin, std::size_t k) { return Rng::derive(seed, origin, k); }

namespace {

Tensor<float> draw_normals(std::vector<Rng>& rngs, std::size_t per_item, const numerics::Shape& shape) {
  std::vector<float> buf(rngs.size() * per_item);
  for (std::size_t b = 0; b < rngs.size(); ++b)
    for (std::size_t i = 0; i < per_item; ++i) buf[b * per_item + i] = static_cast<float>(rngs[b].normal());
  return Tensor<float>::from_data(shape, std::move(buf));
}

/// Runs fn(begin, end) over [0, count) in chunks on up to `threads` workers.
/// The first failing chunk (in index order) has its exception rethrown.
template <typename Fn>
void parallel_chunks(std::size_t count, std::size_t chunk, std::size_t threads, Fn fn) {
  const std::size_t chunks = (count + chunk - 1) / chunk;
  std::vector<std::exception_ptr> errors(chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      try {
        fn(c * chunk, std::min(count, (c + 1) * chunk));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(threads, chunks);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Tensor<float> reverse_chain(const Model& model, const Tensor<float>& latent, std::vector<Rng>& rngs) {
  numerics::NoGradGuard no_grad;
  const auto& spec = model.spec().denoiser;
  const auto& sched = model.schedule();
  if (latent.rank() != 2 || latent.dim(0) != rngs.size())
    throw numerics::ShapeError("reverse_chain: latent " + numerics::shape_str(latent.shape()) + " does not match " +
                               std::to_string(rngs.size()) + " streams");
  const std::size_t batch = rngs.size();
  const numerics::Shape shape{batch, spec.horizon, spec.n_vars};
  const std::size_t per_item = spec.horizon * spec.n_vars;

  auto xs = draw_normals(rngs, per_item, shape);
  for (int s = sched.steps(); s >= 1; --s) {
    try {
      auto eps_hat = model.predict_noise(xs, std::vector<int>(batch, s), latent);
      Tensor<float> z;
      if (s > 1) z = draw_normals(rngs, per_item, shape);
      xs = diffusion::reverse_step(xs, s, eps_hat, sched, z);
    } catch (const numerics::NumericError& e) {
      throw numerics::NumericError("sampling failed at diffusion step " + std::to_string(s) + ": " + e.what());
    }
  }
  return xs;
}

Tensor<float> sample_once(const Model& model, const Tensor<float>& context, Rng& rng) {
  numerics::NoGradGuard no_grad;
  if (context.rank() != 2)
    throw numerics::ShapeError("sample_once: expected [c, m] context, got " + numerics::shape_str(context.shape()));
  auto latent = model.latent(numerics::reshape(context, {1, context.dim(0), context.dim(1)}));
  std::vector<Rng> rngs{rng};
  auto out = reverse_chain(model, latent, rngs);
  rng = rngs[0];
  const auto& spec = model.spec().denoiser;
  return numerics::reshape(out, {spec.horizon, spec.n_vars});
}

std::vector<ForecastEnsemble> forecast_windows(const TrainedModel& trained, const data::TimeSeriesFrame& raw,
                                               const std::vector<std::size_t>& ends, std::size_t samples,
                                               std::size_t total_horizon, std::uint64_t seed, std::size_t threads) {
  const Model& model = trained.model;
  const std::size_t c = trained.config.train.context;
  const std::size_t p = model.spec().denoiser.horizon;
  const std::size_t n = trained.targets.size();
  const std::size_t m = trained.variables.size();
  const auto target_cols = trained.target_columns();
  if (samples == 0) throw std::invalid_argument("forecast: need at least one sample");
  if (total_horizon == 0) throw std::invalid_argument("forecast: horizon must be >= 1");
  if (total_horizon > p && n != m) throw std::invalid_argument("cannot roll forward unobserved covariates");
  if (threads == 0) threads = sampling_threads();

  std::vector<std::size_t> cols;
  for (const auto& name : trained.variables) cols.push_back(raw.column(name));
  for (auto end : ends) {
    if (end < c || end > raw.length())
      throw std::invalid_argument("forecast: a window ending at row " + std::to_string(end) + " needs " +
                                  std::to_string(c) + " context rows within " + std::to_string(raw.length()));
  }

  const std::size_t rounds = (total_horizon + p - 1) / p;
  const std::size_t generated = rounds * p;
  std::vector<ForecastEnsemble> out;
  out.reserve(ends.size());

  // Windows are processed in groups so that standardized state stays small.
  const std::size_t group = std::max<std::size_t>(1, 512 / samples);
  constexpr std::size_t kChunk = 32;
  for (std::size_t g0 = 0; g0 < ends.size(); g0 += group) {
    const std::size_t windows = std::min(group, ends.size() - g0);
    const std::size_t items = windows * samples;

    std::vector<float> base(windows * c * m);
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < m; ++j)
          base[(w * c + i) * m + j] = static_cast<float>(
              data::standardize_value(raw.at(ends[g0 + w] - c + i, cols[j]), trained.stats[j]));

    std::vector<Rng> rngs;
    rngs.reserve(items);
    for (std::size_t w = 0; w < windows; ++w)
      for (std::size_t k = 0; k < samples; ++k) rngs.push_back(path_rng(seed, ends[g0 + w], k));
    std::vector<float> paths(items * generated * n);  // standardized, [item, step, target]

    for (std::size_t round = 0; round < rounds; ++round) {
      parallel_chunks(items, kChunk, threads, [&](std::size_t b, std::size_t e) {
        numerics::NoGradGuard no_grad;
        const std::size_t count = e - b;
        Tensor<float> latent;
        if (round == 0) {
          // Members of one window share a context; encode it once.
          const std::size_t w0 = b / samples, w1 = (e - 1) / samples + 1;
          std::vector<float> ctx(base.begin() + static_cast<long>(w0 * c * m),
                                 base.begin() + static_cast<long>(w1 * c * m));
          auto unique = model.latent(Tensor<float>::from_data({w1 - w0, c, m}, std::move(ctx)));
          const std::size_t d = unique.dim(1);
          std::vector<float> rows(count * d);
          for (std::size_t i = 0; i < count; ++i) {
            const auto src = unique.data().subspan(((b + i) / samples - w0) * d, d);
            std::copy(src.begin(), src.end(), rows.begin() + static_cast<long>(i * d));
          }
          latent = Tensor<float>::from_data({count, d}, std::move(rows));
        } else {
          // Slide each member's window forward by the steps it has generated.
          const std::size_t shift = round * p;
          std::vector<float> ctx(count * c * m);
          for (std::size_t i = 0; i < count; ++i) {
            const std::size_t item = b + i, w = item / samples;
            for (std::size_t t = 0; t < c; ++t) {
              float* dst = &ctx[(i * c + t) * m];
              const std::size_t pos = t + shift;  // position in context ++ generated
              if (pos < c) {
                std::copy_n(&base[(w * c + pos) * m], m, dst);
              } else {
                const float* gen = &paths[(item * generated + (pos - c)) * n];
                for (std::size_t j = 0; j < n; ++j) dst[target_cols[j]] = gen[j];
              }
            }
          }
          latent = model.latent(Tensor<float>::from_data({count, c, m}, std::move(ctx)));
        }
        std::vector<Rng> local(rngs.begin() + static_cast<long>(b), rngs.begin() + static_cast<long>(e));
        auto x0 = reverse_chain(model, latent, local);
        std::copy(local.begin(), local.end(), rngs.begin() + static_cast<long>(b));
        const auto values = x0.data();
        for (std::size_t i = 0; i < count; ++i)
          std::copy_n(values.begin() + static_cast<long>(i * p * n), p * n,
                      paths.begin() + static_cast<long>(((b + i) * generated + round * p) * n));
      });
    }

    for (std::size_t w = 0; w < windows; ++w) {
      ForecastEnsemble ens;
      ens.samples = samples;
      ens.horizon = total_horizon;
      ens.vars = n;
      ens.variable_names = trained.targets;
      const std::size_t last = ends[g0 + w] - 1;
      ens.origin = raw.timestamps.empty() ? std::to_string(last) : raw.timestamps[last];
      ens.values.resize(samples * total_horizon * n);
      for (std::size_t k = 0; k < samples; ++k)
        for (std::size_t t = 0; t < total_horizon; ++t)
          for (std::size_t j = 0; j < n; ++j)
            ens.values[(k * total_horizon + t) * n + j] = data::destandardize(
                static_cast<double>(paths[((w * samples + k) * generated + t) * n + j]), trained.target_stats(j));
      out.push_back(std::move(ens));
    }
  }
  return out;
}

ForecastEnsemble forecast_ensemble(const TrainedModel& trained, const data::TimeSeriesFrame& raw, std::size_t end,
                                   std::size_t samples, std::uint64_t seed, std::size_t threads) {
  return forecast_windows(trained, raw, {end}, samples, trained.model.spec().denoiser.horizon, seed, threads).front();
}

ForecastEnsemble iterative_forecast(const TrainedModel& trained, const data::TimeSeriesFrame& raw, std::size_t end,
                                    std::size_t total_horizon, std::size_t samples, std::uint64_t seed,
                                    std::size_t threads) {
  return forecast_windows(trained, raw, {end}, samples, total_horizon, seed, threads).front();
}

}  // namespace dyndiff::forecasting
