#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dyndiff/data/frame.hpp"
#include "dyndiff/forecasting/model.hpp"
#include "dyndiff/rng.hpp"

namespace dyndiff::forecasting {

/// K sampled trajectories over `horizon` steps for `vars` targets, in
/// original units. values[(k * horizon + step) * vars + j].
struct ForecastEnsemble {
  std::size_t samples = 0;
  std::size_t horizon = 0;
  std::size_t vars = 0;
  std::vector<double> values;
  std::string origin;  // timestamp (or row index) of the last context step
  std::vector<std::string> variable_names;

  double at(std::size_t k, std::size_t step, std::size_t j) const { return values[(k * horizon + step) * vars + j]; }
  /// The K values of one cell.
  std::vector<double> cell(std::size_t step, std::size_t j) const;
};

/// Worker count for sampling: DYNDIFF_THREADS when set, else the hardware
/// concurrency (at least 1).
std::size_t sampling_threads();

/// Ancestral sampling from pure noise for a batch of B chains. Chain b is
/// conditioned on latent row b and draws its x_S and every z from rngs[b]
/// only, so results do not depend on batching. Returns standardized
/// [B, p, n] samples. A non-finite intermediate raises NumericError naming
/// the diffusion step.
Tensor<float> reverse_chain(const Model& model, const Tensor<float>& latent, std::vector<Rng>& rngs);

/// One trajectory for a standardized [c, m] context.
Tensor<float> sample_once(const Model& model, const Tensor<float>& context, Rng& rng);

/// Per-path stream for window origin `origin` and path `k`.
Rng path_rng(std::uint64_t seed, std::uint64_t origin, std::size_t k);

/// Forecasts from raw (unstandardized) data whose columns match the trained
/// variables. Window w uses the `context` rows ending just before ends[w];
/// path k of that window uses path_rng(seed, ends[w], k). Every window is
/// rolled out to `total_horizon` steps: each member generates p steps,
/// appends them to its own context and repeats, then the result is cut to
/// total_horizon. Rolling past p requires every input column to be a target.
std::vector<ForecastEnsemble> forecast_windows(const TrainedModel& trained, const data::TimeSeriesFrame& raw,
                                               const std::vector<std::size_t>& ends, std::size_t samples,
                                               std::size_t total_horizon, std::uint64_t seed,
                                               std::size_t threads = 0);

/// K paths over the model horizon for the window ending before `end`.
ForecastEnsemble forecast_ensemble(const TrainedModel& trained, const data::TimeSeriesFrame& raw, std::size_t end,
                                   std::size_t samples, std::uint64_t seed, std::size_t threads = 0);

/// K paths over `total_horizon` steps, rolled forward p steps at a time.
ForecastEnsemble iterative_forecast(const TrainedModel& trained, const data::TimeSeriesFrame& raw, std::size_t end,
                                    std::size_t total_horizon, std::size_t samples, std::uint64_t seed,
                                    std::size_t threads = 0);

}  // namespace dyndiff::forecasting
