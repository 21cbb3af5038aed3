#include "dyndiff/forecasting/pipeline.hpp"

#include <memory>
#include <stdexcept>

namespace dyndiff::forecasting {

PreparedData prepare_data(data::TimeSeriesFrame raw, const RunConfig& cfg) {
  if (cfg.data.targets.empty()) throw std::invalid_argument("data.targets must name the target columns");
  data::set_targets(raw, cfg.data.targets);
  PreparedData out;
  out.split = data::split(raw, cfg.data.split, cfg.train.context + cfg.train.horizon);
  out.stats = data::fit_stats(out.split.train, &out.warnings);
  out.raw = std::move(raw);
  return out;
}

FitResult fit(const PreparedData& prepared, const RunConfig& cfg) {
  const auto& raw = prepared.raw;
  auto train_frame = std::make_shared<const data::TimeSeriesFrame>(data::standardize(prepared.split.train, prepared.stats));
  auto val_frame = std::make_shared<const data::TimeSeriesFrame>(data::standardize(prepared.split.val, prepared.stats));
  data::WindowSet train_windows(train_frame, cfg.train.context, cfg.train.horizon, cfg.data.stride);
  data::WindowSet val_windows(val_frame, cfg.train.context, cfg.train.horizon, 1);

  const auto spec = model_spec(cfg, raw.vars(), raw.targets.size());
  auto outcome = train(train_windows, &val_windows, spec, cfg.train);
  FitResult out{TrainedModel{std::move(outcome.model), cfg, raw.names, raw.target_names(), prepared.stats,
                             outcome.rng_state},
                std::move(outcome.log), outcome.best_step, outcome.stopped_early};
  return out;
}

std::vector<std::size_t> test_window_ends(const PreparedData& prepared, std::size_t context, std::size_t horizon,
                                          std::size_t stride, std::size_t limit) {
  if (stride == 0) throw std::invalid_argument("test window stride must be >= 1");
  const std::size_t length = prepared.raw.length();
  const std::size_t first = std::max(prepared.split.test_start, context);
  std::vector<std::size_t> all;
  for (std::size_t end = first; end + horizon <= length; end += stride) all.push_back(end);
  if (limit == 0 || limit >= all.size()) return all;
  std::vector<std::size_t> out(limit);
  for (std::size_t i = 0; i < limit; ++i) out[i] = all[i * all.size() / limit];
  return out;
}

}  // namespace dyndiff::forecasting
