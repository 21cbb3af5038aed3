#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyndiff/forecasting/pipeline.hpp"
#include "dyndiff/forecasting/sampling.hpp"

namespace dyndiff::evaluation {

using forecasting::ForecastEnsemble;

/// Ensemble mean per cell, [horizon * vars] in ensemble order.
std::vector<double> point_forecast(const ForecastEnsemble& ens);

struct Metrics {
  double mae = 0.0;
  double mse = 0.0;
  double crps = 0.0;
};

struct EvalReport {
  std::string method;
  std::map<std::size_t, Metrics> per_horizon;  // 1-based lead time
  Metrics overall;                             // every step 1..p
  // Standard deviations across trials; zero for a single trial.
  std::map<std::size_t, Metrics> per_horizon_std;
  Metrics overall_std;
  std::size_t n_windows = 0;
  std::size_t samples = 0;
  std::size_t trials = 1;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;  // training seeds
  std::uint64_t forecast_seed = 0;
};

/// Scores ensembles against observations (each [horizon * vars], original
/// units). Per lead time h: MAE and MSE of the ensemble mean and CRPS per
/// variable, averaged over variables and windows. `overall` averages the
/// same quantities over every step. Throws if a horizon exceeds the
/// ensemble length or shapes disagree.
EvalReport score(const std::vector<ForecastEnsemble>& ensembles, const std::vector<std::vector<double>>& truths,
                 const std::vector<std::size_t>& horizons);

/// Observed targets over [end, end + horizon), [horizon * n].
std::vector<double> window_truth(const data::TimeSeriesFrame& raw, std::size_t end, std::size_t horizon);

/// Ensembles whose every path equals the observation.
std::vector<ForecastEnsemble> oracle_ensembles(const std::vector<std::vector<double>>& truths,
                                               const std::vector<std::string>& names, std::size_t horizon,
                                               std::size_t samples);

/// Each cell drawn independently from the training segment's values of
/// that target, path k of a window using path_rng(seed, end, k).
std::vector<ForecastEnsemble> climatology_ensembles(const forecasting::PreparedData& prepared,
                                                    const std::vector<std::size_t>& ends, std::size_t horizon,
                                                    std::size_t samples, std::uint64_t seed);

struct EvalOptions {
  std::vector<std::size_t> horizons{1, 4, 7, 10};
  std::size_t windows = 0;  // 0: all test windows
  std::size_t stride = 1;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  bool oracle_identity = false;  // score the truth against itself
};

struct EvalRun {
  EvalReport report;
  std::vector<std::size_t> ends;
  std::vector<ForecastEnsemble> ensembles;
  std::vector<std::vector<double>> truths;
};

/// Forecasts every selected test window of `prepared` with the trained
/// model and scores the result.
EvalRun evaluate(const forecasting::TrainedModel& trained, const forecasting::PreparedData& prepared,
                 const EvalOptions& opts);

/// Mean and sample standard deviation of each metric across trials.
EvalReport combine_trials(const std::vector<EvalReport>& trials);

/// "key = value" lines, one metric per line.
std::string format_report(const EvalReport& r);
/// Methods as rows, ordered by overall CRPS ascending.
std::string format_comparison(std::vector<EvalReport> reports);

}  // namespace dyndiff::evaluation
