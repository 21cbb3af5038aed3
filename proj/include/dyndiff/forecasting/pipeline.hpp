#pragma once

#include <cstddef>
#include <vector>

#include "dyndiff/data/frame.hpp"
#include "dyndiff/forecasting/config.hpp"
#include "dyndiff/forecasting/model.hpp"
#include "dyndiff/forecasting/train.hpp"

namespace dyndiff::forecasting {

/// Raw data cut into chronological segments, with statistics fitted on the
/// training segment only.
struct PreparedData {
  data::TimeSeriesFrame raw;  // targets marked
  data::FrameSplit split;     // raw segments
  std::vector<data::VariableStats> stats;
  std::vector<std::string> warnings;
};

/// Marks cfg.data.targets and splits. Throws if no target is named or a
/// segment cannot hold one context + horizon window.
PreparedData prepare_data(data::TimeSeriesFrame raw, const RunConfig& cfg);

struct FitResult {
  TrainedModel trained;
  std::vector<TrainLogEntry> log;
  std::size_t best_step = 0;
  bool stopped_early = false;
};

/// Trains on the training segment with early stopping on the validation
/// segment.
FitResult fit(const PreparedData& prepared, const RunConfig& cfg);

/// End rows (exclusive) of the forecast windows whose targets lie in the
/// test segment, every `stride` rows; at most `limit` of them (0: all),
/// spread evenly.
std::vector<std::size_t> test_window_ends(const PreparedData& prepared, std::size_t context, std::size_t horizon,
                                          std::size_t stride, std::size_t limit = 0);

}  // namespace dyndiff::forecasting
