#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dyndiff/data/checkpoint.hpp"
#include "dyndiff/data/config_file.hpp"
#include "dyndiff/data/synth.hpp"
#include "dyndiff/evaluation/metrics.hpp"
#include "dyndiff/evaluation/report.hpp"
#include "dyndiff/forecasting/pipeline.hpp"
#include "dyndiff/forecasting/sampling.hpp"

namespace dyndiff::cli {

namespace fs = std::filesystem;
using data::format_number;
using forecasting::ForecastEnsemble;
using forecasting::RunConfig;
using forecasting::TrainedModel;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void apply_or_usage(RunConfig& cfg, const data::KeyValues& kv) {
  try {
    forecasting::apply_key_values(cfg, kv);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

/// Config file first, then `key=value` overrides, then dedicated flags.
RunConfig build_config(const std::string& config_path, const std::vector<std::string>& sets,
                       const data::KeyValues& flags) {
  RunConfig cfg;
  if (!config_path.empty()) {
    data::KeyValues file;
    try {
      file = data::load_config_file(config_path);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    apply_or_usage(cfg, file);
  }
  data::KeyValues overrides;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  apply_or_usage(cfg, overrides);
  apply_or_usage(cfg, flags);
  return cfg;
}

TrainedModel load_model(const std::string& path) { return forecasting::from_checkpoint(data::load_checkpoint(path)); }

std::string ensemble_csv(const std::vector<ForecastEnsemble>& ens, bool with_window) {
  std::string out = with_window ? "window,path_id,variable,step,value\n" : "path_id,variable,step,value\n";
  for (std::size_t w = 0; w < ens.size(); ++w) {
    const auto& e = ens[w];
    for (std::size_t k = 0; k < e.samples; ++k)
      for (std::size_t j = 0; j < e.vars; ++j)
        for (std::size_t t = 0; t < e.horizon; ++t) {
          if (with_window) out += std::to_string(w) + ",";
          out += std::to_string(k) + "," + e.variable_names[j] + "," + std::to_string(t + 1) + "," +
                 format_number(e.at(k, t, j)) + "\n";
        }
  }
  return out;
}

std::string truth_csv(const std::vector<std::vector<double>>& truths, const std::vector<std::string>& names,
                      bool with_window) {
  std::string out = with_window ? "window,variable,step,value\n" : "variable,step,value\n";
  const std::size_t n = names.size();
  for (std::size_t w = 0; w < truths.size(); ++w)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t * n + j < truths[w].size(); ++t) {
        if (with_window) out += std::to_string(w) + ",";
        out += names[j] + "," + std::to_string(t + 1) + "," + format_number(truths[w][t * n + j]) + "\n";
      }
  return out;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, targets;
  std::optional<std::uint64_t> seed;
  bool unconditional = false;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  data::KeyValues flags;
  if (a.seed) flags["train.seed"] = std::to_string(*a.seed);
  if (a.unconditional) flags["train.unconditional"] = "true";
  if (!a.targets.empty()) flags["data.targets"] = a.targets;
  const auto cfg = build_config(a.config, a.sets, flags);
  if (cfg.data.targets.empty()) throw UsageError("no target columns: set data.targets in the config or pass --targets");

  auto prepared = forecasting::prepare_data(data::load_csv(a.data, cfg.data.targets), cfg);
  for (const auto& w : prepared.warnings) err << "warning: " << w << "\n";
  const auto result = forecasting::fit(prepared, cfg);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  data::save_checkpoint(forecasting::to_checkpoint(result.trained), (dir / "checkpoint.ckpt").string());
  write_file(dir / "train_log.csv", forecasting::format_train_log(result.log));
  out << "trained " << result.log.size() << " steps" << (result.stopped_early ? " (stopped early)" : "")
      << ", kept step " << result.best_step << ", final loss " << format_number(result.log.back().loss) << "\n";
  out << "wrote " << (dir / "checkpoint.ckpt").string() << " and " << (dir / "train_log.csv").string() << "\n";
  return kExitOk;
}

// ---- forecast ------------------------------------------------------------

struct ForecastArgs {
  std::string checkpoint, data, out, truth_out;
  std::optional<std::size_t> samples, horizon, end;
  std::optional<std::uint64_t> seed;
  bool point = false;
};

fs::path point_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension();
  return p.string() + ".point.csv";
}

int cmd_forecast(const ForecastArgs& a, std::ostream& out, std::ostream&) {
  const auto trained = load_model(a.checkpoint);
  const auto& fc = trained.config.forecast;
  const auto raw = data::load_csv(a.data, trained.targets);
  const std::size_t end = a.end.value_or(raw.length());
  if (end > raw.length()) throw UsageError("--end " + std::to_string(end) + " is past the last row");
  const auto ens = forecasting::iterative_forecast(trained, raw, end, a.horizon.value_or(fc.horizon),
                                                   a.samples.value_or(fc.samples), a.seed.value_or(fc.seed));
  write_file(a.out, ensemble_csv({ens}, false));
  out << "wrote " << ens.samples << " paths of " << ens.horizon << " steps from origin " << ens.origin << " to "
      << a.out << "\n";
  if (a.point) {
    const auto mean = evaluation::point_forecast(ens);
    std::string csv = "variable,step,value\n";
    for (std::size_t j = 0; j < ens.vars; ++j)
      for (std::size_t t = 0; t < ens.horizon; ++t)
        csv += ens.variable_names[j] + "," + std::to_string(t + 1) + "," + format_number(mean[t * ens.vars + j]) + "\n";
    write_file(point_path(a.out), csv);
    out << "wrote " << point_path(a.out).string() << "\n";
  }
  if (!a.truth_out.empty()) {
    const std::size_t available = std::min(ens.horizon, raw.length() - end);
    std::vector<double> truth;
    for (std::size_t t = 0; t < available; ++t)
      for (auto col : raw.targets) truth.push_back(raw.at(end + t, col));
    write_file(a.truth_out, truth_csv({truth}, trained.targets, false));
  }
  return kExitOk;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint, baseline, data, out, ensembles_out, truth_out;
  std::vector<std::size_t> horizons;
  std::optional<std::size_t> samples, trials, windows, stride;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
};

struct MethodResult {
  evaluation::EvalReport report;
  evaluation::EvalRun first;
};

MethodResult evaluate_method(const TrainedModel& trained, const data::TimeSeriesFrame& raw,
                             const evaluation::EvalOptions& opts, std::size_t trials, std::ostream& out) {
  const auto prepared = forecasting::prepare_data(raw, trained.config);
  MethodResult r{{}, evaluation::evaluate(trained, prepared, opts)};
  std::vector<evaluation::EvalReport> reports{r.first.report};
  for (std::size_t i = 1; i < trials; ++i) {
    auto cfg = trained.config;
    cfg.train.seed += i;
    out << "trial " << i + 1 << "/" << trials << ": training with seed " << cfg.train.seed << "\n";
    const auto refit = forecasting::fit(forecasting::prepare_data(raw, cfg), cfg);
    reports.push_back(evaluation::evaluate(refit.trained, prepared, opts).report);
  }
  r.report = evaluation::combine_trials(reports);
  return r;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  const auto trained = load_model(a.checkpoint);
  const auto& cfg = trained.config;
  evaluation::EvalOptions opts;
  opts.horizons = a.horizons.empty() ? cfg.eval.horizons : a.horizons;
  opts.samples = a.samples.value_or(cfg.forecast.samples);
  opts.windows = a.windows.value_or(cfg.eval.windows);
  opts.stride = a.stride.value_or(cfg.eval.stride);
  opts.seed = a.seed.value_or(cfg.forecast.seed);
  opts.oracle_identity = a.oracle;
  const std::size_t trials = a.oracle ? 1 : a.trials.value_or(cfg.eval.trials);
  if (trials == 0) throw UsageError("--trials must be >= 1");
  const std::size_t p = trained.model.spec().denoiser.horizon;
  for (auto h : opts.horizons)
    if (h == 0 || h > p)
      throw UsageError("horizon " + std::to_string(h) + " is beyond the model horizon " + std::to_string(p));

  const auto raw = data::load_csv(a.data, trained.targets);
  auto main = evaluate_method(trained, raw, opts, trials, out);

  std::string doc;
  if (a.baseline.empty()) {
    doc = evaluation::format_report(main.report);
  } else {
    const auto base_model = load_model(a.baseline);
    if (base_model.targets != trained.targets) throw UsageError("--baseline forecasts different targets");
    auto base = evaluate_method(base_model, data::load_csv(a.data, base_model.targets), opts, trials, out);
    if (base.report.method == main.report.method) base.report.method += "-baseline";
    doc = "[" + main.report.method + "]\n" + evaluation::format_report(main.report) + "\n[" + base.report.method +
          "]\n" + evaluation::format_report(base.report) + "\n[comparison]\n" +
          evaluation::format_comparison({main.report, base.report});
  }
  if (a.out.empty()) {
    out << doc;
  } else {
    write_file(a.out, doc);
    out << "wrote " << a.out << "\n";
  }
  if (!a.ensembles_out.empty()) write_file(a.ensembles_out, ensemble_csv(main.first.ensembles, true));
  if (!a.truth_out.empty()) write_file(a.truth_out, truth_csv(main.first.truths, trained.targets, true));
  return kExitOk;
}

// ---- hist ----------------------------------------------------------------

struct HistArgs {
  std::string ensembles, truth, out, variable;
  std::size_t bins = 20;
  std::optional<std::size_t> position;
};

struct LongRows {
  std::vector<std::string> variable;
  std::vector<std::size_t> step;
  std::vector<double> value;
};

LongRows read_long_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
  const auto header = split_commas(line);
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cv = col("variable"), cs = col("step"), cx = col("value");
  LongRows rows;
  for (std::size_t line_no = 2; std::getline(f, line); ++line_no) {
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": wrong cell count");
    try {
      rows.variable.push_back(cells[cv]);
      rows.step.push_back(std::stoul(cells[cs]));
      rows.value.push_back(std::stod(cells[cx]));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  if (rows.value.empty()) throw std::runtime_error(path + ": no rows");
  return rows;
}

std::vector<double> pick(const LongRows& rows, const std::string& variable, std::optional<std::size_t> position) {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows.value.size(); ++i)
    if (rows.variable[i] == variable && (!position || rows.step[i] == *position)) out.push_back(rows.value[i]);
  return out;
}

int cmd_hist(const HistArgs& a, std::ostream& out, std::ostream&) {
  const auto model = read_long_csv(a.ensembles);
  const auto truth = read_long_csv(a.truth);
  const std::string variable = a.variable.empty() ? model.variable.front() : a.variable;
  if (a.position) {
    const std::size_t steps = *std::max_element(model.step.begin(), model.step.end());
    if (*a.position == 0 || *a.position > steps)
      throw std::runtime_error("position " + std::to_string(*a.position) + " is outside 1.." + std::to_string(steps));
  }
  const auto mv = pick(model, variable, a.position);
  const auto tv = pick(truth, variable, a.position);
  if (mv.empty()) throw std::runtime_error("no samples for variable '" + variable + "'");

  double lo = mv.front(), hi = mv.front();
  for (const auto* v : {&mv, &tv})
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  std::string csv = "bin_left,bin_right,count,series\n";
  for (const auto& [tag, values] : {std::pair{"model", &mv}, std::pair{"truth", &tv}}) {
    const auto h = evaluation::histogram(*values, a.bins, lo, hi);
    for (std::size_t b = 0; b < a.bins; ++b)
      csv += format_number(h.edges[b]) + "," + format_number(h.edges[b + 1]) + "," + std::to_string(h.counts[b]) +
             "," + tag + "\n";
  }
  write_file(a.out, csv);
  out << "wrote " << a.bins << " bins over " << mv.size() << " samples and " << tv.size() << " observations ("
      << (a.position ? "position " + std::to_string(*a.position) : std::string("all positions")) << ") to " << a.out
      << "\n";
  return kExitOk;
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string kind, out;
  std::size_t length = 0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  data::SynthKind kind;
  try {
    kind = data::parse_synth_kind(a.kind);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.length == 0) throw UsageError("--length must be >= 1");
  const auto series = data::synth_generate(kind, a.length, a.seed);
  write_file(a.out, data::format_csv(series.frame));
  out << "wrote " << a.length << " rows of " << a.kind << " to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional diffusion forecaster for multivariate time series"};
  app.name("dyndiff");
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint plus loss log");
  train->add_option("--data", ta.data, "CSV with a header row")->required()->check(CLI::ExistingFile);
  train->add_option("--config", ta.config, "key = value configuration file")->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "Overrides train.seed");
  train->add_option("--targets", ta.targets, "Comma-separated target columns (data.targets)");
  train->add_flag("--unconditional", ta.unconditional, "Train without the context encoder");
  train->add_option("--set", ta.sets, "Extra key=value overrides");

  ForecastArgs fa;
  auto* forecast = app.add_subcommand("forecast", "Sample an ensemble of future paths");
  forecast->add_option("--checkpoint", fa.checkpoint)->required()->check(CLI::ExistingFile);
  forecast->add_option("--data", fa.data, "History; the context ends before --end")->required()->check(CLI::ExistingFile);
  forecast->add_option("--out", fa.out, "Ensemble CSV (path_id,variable,step,value)")->required();
  forecast->add_option("--samples", fa.samples, "Ensemble size (default forecast.samples)");
  forecast->add_option("--horizon", fa.horizon, "Steps to forecast (default forecast.horizon)");
  forecast->add_option("--seed", fa.seed, "Sampling seed (default forecast.seed)");
  forecast->add_option("--end", fa.end, "Rows of history to use (default: all)");
  forecast->add_flag("--point", fa.point, "Also write the ensemble mean");
  forecast->add_option("--truth-out", fa.truth_out, "Write the observed values after --end, where present");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score forecasts on the test segment");
  evaluate->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ea.data, "Full dataset the model was trained on")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", ea.out, "Report path (default: stdout)");
  evaluate->add_option("--horizons", ea.horizons, "Lead times to report")->delimiter(',');
  evaluate->add_option("--samples", ea.samples, "Ensemble size");
  evaluate->add_option("--seed", ea.seed, "Sampling seed");
  evaluate->add_option("--trials", ea.trials, "Retrain with this many consecutive seeds");
  evaluate->add_option("--windows", ea.windows, "Cap on test windows (0: all)");
  evaluate->add_option("--stride", ea.stride, "Spacing of test windows");
  evaluate->add_option("--baseline", ea.baseline, "Second checkpoint to compare against")->check(CLI::ExistingFile);
  evaluate->add_flag("--oracle-identity", ea.oracle, "Score the observations against themselves");
  evaluate->add_option("--ensembles-out", ea.ensembles_out, "Write every test ensemble as CSV");
  evaluate->add_option("--truth-out", ea.truth_out, "Write the matching observations as CSV");

  HistArgs ha;
  auto* hist = app.add_subcommand("hist", "Histogram data of ensemble samples and observations");
  hist->add_option("--ensembles", ha.ensembles)->required()->check(CLI::ExistingFile);
  hist->add_option("--truth", ha.truth)->required()->check(CLI::ExistingFile);
  hist->add_option("--out", ha.out)->required();
  hist->add_option("--bins", ha.bins, "Number of bins")->check(CLI::PositiveNumber);
  hist->add_option("--position", ha.position, "1-based step; omit to pool all positions");
  hist->add_option("--variable", ha.variable, "Variable to plot (default: the first)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic series");
  synth->add_option("--kind", sa.kind, "One of " + [] {
    std::string s;
    for (const auto& k : data::synth_kind_names()) s += (s.empty() ? "" : ", ") + k;
    return s;
  }())->required();
  synth->add_option("--length", sa.length)->required();
  synth->add_option("--seed", sa.seed);
  synth->add_option("--out", sa.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta, out, err);
    if (*forecast) return cmd_forecast(fa, out, err);
    if (*evaluate) return cmd_evaluate(ea, out, err);
    if (*hist) return cmd_hist(ha, out, err);
    if (*synth) return cmd_synth(sa, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dyndiff::cli
