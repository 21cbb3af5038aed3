#include "dyndiff/evaluation/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "dyndiff/evaluation/metrics.hpp"

namespace dyndiff::evaluation {

std::vector<double> point_forecast(const ForecastEnsemble& ens) {
  if (ens.samples == 0) throw std::invalid_argument("point_forecast: empty ensemble");
  const std::size_t cells = ens.horizon * ens.vars;
  std::vector<double> out(cells, 0.0);
  for (std::size_t i = 0; i < cells; ++i) {
    double sum = 0.0;
    bool constant = true;
    for (std::size_t k = 0; k < ens.samples; ++k) {
      sum += ens.values[k * cells + i];
      constant = constant && ens.values[k * cells + i] == ens.values[i];
    }
    out[i] = constant ? ens.values[i] : sum / static_cast<double>(ens.samples);
  }
  return out;
}

namespace {

struct Accumulator {
  double abs = 0.0, sq = 0.0, crps = 0.0;
  std::size_t count = 0;

  void add(double point, double truth, double score) {
    abs += std::abs(point - truth);
    sq += (point - truth) * (point - truth);
    crps += score;
    ++count;
  }
  Metrics result() const {
    const auto n = static_cast<double>(count);
    return {abs / n, sq / n, crps / n};
  }
};

}  // namespace

EvalReport score(const std::vector<ForecastEnsemble>& ensembles, const std::vector<std::vector<double>>& truths,
                 const std::vector<std::size_t>& horizons) {
  if (ensembles.empty()) throw std::invalid_argument("score: no windows");
  if (ensembles.size() != truths.size()) throw std::invalid_argument("score: ensembles and observations differ in count");
  const std::size_t p = ensembles.front().horizon, n = ensembles.front().vars;
  for (auto h : horizons)
    if (h == 0 || h > p)
      throw std::invalid_argument("horizon " + std::to_string(h) + " is outside the forecast length " + std::to_string(p));

  std::vector<Accumulator> steps(p);
  for (std::size_t w = 0; w < ensembles.size(); ++w) {
    const auto& ens = ensembles[w];
    if (ens.horizon != p || ens.vars != n || truths[w].size() != p * n)
      throw std::invalid_argument("score: window " + std::to_string(w) + " has a different shape");
    const auto point = point_forecast(ens);
    for (std::size_t t = 0; t < p; ++t)
      for (std::size_t j = 0; j < n; ++j) {
        const auto cell = ens.cell(t, j);
        const double x = truths[w][t * n + j];
        steps[t].add(point[t * n + j], x, crps(cell, x));
      }
  }

  EvalReport r;
  r.n_windows = ensembles.size();
  r.samples = ensembles.front().samples;
  Accumulator all;
  for (const auto& s : steps) {
    all.abs += s.abs;
    all.sq += s.sq;
    all.crps += s.crps;
    all.count += s.count;
  }
  r.overall = all.result();
  for (auto h : horizons) {
    r.per_horizon[h] = steps[h - 1].result();
    r.per_horizon_std[h] = {};
  }
  return r;
}

std::vector<double> window_truth(const data::TimeSeriesFrame& raw, std::size_t end, std::size_t horizon) {
  if (end + horizon > raw.length())
    throw std::invalid_argument("no observations for " + std::to_string(horizon) + " steps after row " +
                                std::to_string(end));
  std::vector<double> out;
  out.reserve(horizon * raw.targets.size());
  for (std::size_t t = 0; t < horizon; ++t)
    for (auto col : raw.targets) out.push_back(raw.at(end + t, col));
  return out;
}

std::vector<ForecastEnsemble> oracle_ensembles(const std::vector<std::vector<double>>& truths,
                                               const std::vector<std::string>& names, std::size_t horizon,
                                               std::size_t samples) {
  std::vector<ForecastEnsemble> out;
  for (const auto& truth : truths) {
    ForecastEnsemble ens;
    ens.samples = samples;
    ens.horizon = horizon;
    ens.vars = names.size();
    ens.variable_names = names;
    for (std::size_t k = 0; k < samples; ++k) ens.values.insert(ens.values.end(), truth.begin(), truth.end());
    out.push_back(std::move(ens));
  }
  return out;
}

std::vector<ForecastEnsemble> climatology_ensembles(const forecasting::PreparedData& prepared,
                                                    const std::vector<std::size_t>& ends, std::size_t horizon,
                                                    std::size_t samples, std::uint64_t seed) {
  const auto& train = prepared.split.train;
  const auto& raw = prepared.raw;
  std::vector<ForecastEnsemble> out;
  for (auto end : ends) {
    ForecastEnsemble ens;
    ens.samples = samples;
    ens.horizon = horizon;
    ens.vars = raw.targets.size();
    ens.variable_names = raw.target_names();
    ens.origin = raw.timestamps.empty() ? std::to_string(end - 1) : raw.timestamps[end - 1];
    for (std::size_t k = 0; k < samples; ++k) {
      Rng rng = forecasting::path_rng(seed, end, k);
      for (std::size_t t = 0; t < horizon; ++t)
        for (auto col : raw.targets) ens.values.push_back(train.at(rng.index(train.length()), col));
    }
    out.push_back(std::move(ens));
  }
  return out;
}

EvalRun evaluate(const forecasting::TrainedModel& trained, const forecasting::PreparedData& prepared,
                 const EvalOptions& opts) {
  const std::size_t p = trained.model.spec().denoiser.horizon;
  for (auto h : opts.horizons)
    if (h == 0 || h > p)
      throw std::invalid_argument("horizon " + std::to_string(h) + " exceeds the model horizon " + std::to_string(p));
  EvalRun run;
  run.ends = forecasting::test_window_ends(prepared, trained.config.train.context, p, opts.stride, opts.windows);
  if (run.ends.empty()) throw std::invalid_argument("the test segment holds no complete window");
  for (auto end : run.ends) run.truths.push_back(window_truth(prepared.raw, end, p));
  if (opts.oracle_identity) {
    run.ensembles = oracle_ensembles(run.truths, trained.targets, p, opts.samples);
  } else {
    run.ensembles =
        forecasting::forecast_windows(trained, prepared.raw, run.ends, opts.samples, p, opts.seed, opts.threads);
  }
  run.report = score(run.ensembles, run.truths, opts.horizons);
  run.report.method = opts.oracle_identity ? "oracle" : trained.config.train.unconditional ? "unconditional" : "conditional";
  run.report.config_hash = forecasting::config_hash(trained.config);
  run.report.seeds = {trained.config.train.seed};
  run.report.forecast_seed = opts.seed;
  return run;
}

EvalReport combine_trials(const std::vector<EvalReport>& trials) {
  if (trials.empty()) throw std::invalid_argument("combine_trials: no trials");
  EvalReport out = trials.front();
  out.trials = trials.size();
  out.seeds.clear();
  for (const auto& t : trials) out.seeds.insert(out.seeds.end(), t.seeds.begin(), t.seeds.end());

  auto stats = [&](auto get) {
    double mean = 0.0;
    for (const auto& t : trials) mean += get(t) / static_cast<double>(trials.size());
    double var = 0.0;
    for (const auto& t : trials) var += (get(t) - mean) * (get(t) - mean);
    const double sd = trials.size() > 1 ? std::sqrt(var / static_cast<double>(trials.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  auto combine = [&](auto metrics_of, Metrics& mean, Metrics& sd) {
    std::tie(mean.mae, sd.mae) = stats([&](const EvalReport& r) { return metrics_of(r).mae; });
    std::tie(mean.mse, sd.mse) = stats([&](const EvalReport& r) { return metrics_of(r).mse; });
    std::tie(mean.crps, sd.crps) = stats([&](const EvalReport& r) { return metrics_of(r).crps; });
  };
  combine([](const EvalReport& r) -> const Metrics& { return r.overall; }, out.overall, out.overall_std);
  for (auto& [h, m] : out.per_horizon) {
    const std::size_t key = h;
    combine([key](const EvalReport& r) -> const Metrics& { return r.per_horizon.at(key); }, m, out.per_horizon_std[h]);
  }
  return out;
}

namespace {

void put_metrics(std::ostringstream& os, const std::string& prefix, const Metrics& m, const Metrics& sd, bool with_sd) {
  auto put = [&](const char* name, double v, double s) {
    os << prefix << '.' << name << " = " << data::format_number(v) << '\n';
    if (with_sd) os << prefix << '.' << name << "_std = " << data::format_number(s) << '\n';
  };
  put("mae", m.mae, sd.mae);
  put("mse", m.mse, sd.mse);
  put("crps", m.crps, sd.crps);
}

}  // namespace

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "method = " << r.method << '\n';
  os << "config_hash = " << r.config_hash << '\n';
  os << "n_windows = " << r.n_windows << '\n';
  os << "samples = " << r.samples << '\n';
  os << "trials = " << r.trials << '\n';
  os << "seeds = ";
  for (std::size_t i = 0; i < r.seeds.size(); ++i) os << (i ? "," : "") << r.seeds[i];
  os << '\n';
  os << "forecast_seed = " << r.forecast_seed << '\n';
  const bool with_sd = r.trials > 1;
  for (const auto& [h, m] : r.per_horizon) {
    const auto sd = r.per_horizon_std.count(h) ? r.per_horizon_std.at(h) : Metrics{};
    put_metrics(os, "horizon." + std::to_string(h), m, sd, with_sd);
  }
  put_metrics(os, "overall", r.overall, r.overall_std, with_sd);
  return os.str();
}

std::string format_comparison(std::vector<EvalReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const EvalReport& a, const EvalReport& b) { return a.overall.crps < b.overall.crps; });
  std::ostringstream os;
  os << "rank,method,crps,crps_std,mae,mae_std,mse,mse_std,trials\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << i + 1 << ',' << r.method << ',' << data::format_number(r.overall.crps) << ','
       << data::format_number(r.overall_std.crps) << ',' << data::format_number(r.overall.mae) << ','
       << data::format_number(r.overall_std.mae) << ',' << data::format_number(r.overall.mse) << ','
       << data::format_number(r.overall_std.mse) << ',' << r.trials << '\n';
  }
  return os.str();
}

}  // namespace dyndiff::evaluation
