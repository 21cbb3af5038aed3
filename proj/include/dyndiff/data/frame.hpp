#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dyndiff/numerics/tensor.hpp"

namespace dyndiff::data {

struct VariableStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Per-variable floor applied to the standard deviation.
inline constexpr double kMinStd = 1e-8;

/// m variables over t steps, stored row by row: values[i * m + j] is
/// variable j at step i.
struct TimeSeriesFrame {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<std::string> timestamps;  // empty when the source had none
  std::vector<std::size_t> targets;     // column indices, in target order
  std::vector<VariableStats> stats;     // filled once standardized

  std::size_t vars() const { return names.size(); }
  std::size_t length() const { return names.empty() ? 0 : values.size() / names.size(); }
  double at(std::size_t step, std::size_t var) const { return values[step * vars() + var]; }
  bool standardized() const { return !stats.empty(); }

  /// Throws std::invalid_argument naming the column if absent.
  std::size_t column(const std::string& name) const;
  std::vector<std::string> target_names() const;
  /// Copy of steps [start, start + count).
  TimeSeriesFrame rows(std::size_t start, std::size_t count) const;
};

/// Marks `targets` (by name) as forecast targets. Throws naming any absent
/// column; an empty list is an error.
void set_targets(TimeSeriesFrame& frame, const std::vector<std::string>& targets);

/// Reads a comma-separated file with a header row. A first column named
/// "timestamp" (any case) is kept as labels, not as a variable. Empty, "NA"
/// and "NaN" cells are missing and take the previous row's value; a missing
/// cell in the first row is an error. Malformed cells are reported with
/// their 1-based line and column name.
TimeSeriesFrame load_csv(const std::string& path, const std::vector<std::string>& target_columns);
TimeSeriesFrame parse_csv(const std::string& text, const std::vector<std::string>& target_columns,
                          const std::string& source = "<memory>");

/// Writes the frame (timestamps first when present) with shortest
/// round-trip number formatting.
void write_csv(const TimeSeriesFrame& frame, const std::string& path);
std::string format_csv(const TimeSeriesFrame& frame);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

/// Population mean and standard deviation of every variable. Standard
/// deviations below kMinStd are raised to it and a warning naming the
/// variable is appended to `warnings`.
std::vector<VariableStats> fit_stats(const TimeSeriesFrame& frame, std::vector<std::string>* warnings = nullptr);

/// (x - mean) / std per variable, with the given stats attached.
TimeSeriesFrame standardize(const TimeSeriesFrame& frame, const std::vector<VariableStats>& stats);

/// Inverse map for a single variable.
inline double destandardize(double z, const VariableStats& s) { return z * s.std + s.mean; }
inline double standardize_value(double x, const VariableStats& s) { return (x - s.mean) / s.std; }

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct FrameSplit {
  TimeSeriesFrame train, val, test;
  std::size_t val_start = 0;
  std::size_t test_start = 0;
};

/// Contiguous chronological segments, train first. Train and validation
/// lengths are round(t * ratio); the test segment takes the rest. Throws
/// if a ratio is not positive, the ratios do not sum to one, or a segment
/// is shorter than `min_length`.
FrameSplit split(const TimeSeriesFrame& frame, const SplitRatios& ratios, std::size_t min_length);

/// Windows over one frame. Window i starts at step i * stride; its context
/// covers all variables over [start, start + context) and its target the
/// target variables over the following `horizon` steps.
class WindowSet {
 public:
  WindowSet(std::shared_ptr<const TimeSeriesFrame> frame, std::size_t context, std::size_t horizon,
            std::size_t stride = 1);

  std::size_t size() const { return count_; }
  std::size_t context() const { return context_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t stride() const { return stride_; }
  std::size_t start(std::size_t i) const { return i * stride_; }
  const TimeSeriesFrame& frame() const { return *frame_; }

  /// [indices.size(), context, m]
  template <typename T>
  numerics::Tensor<T> contexts(const std::vector<std::size_t>& indices) const;
  /// [indices.size(), horizon, n]
  template <typename T>
  numerics::Tensor<T> targets(const std::vector<std::size_t>& indices) const;

 private:
  std::shared_ptr<const TimeSeriesFrame> frame_;
  std::size_t context_, horizon_, stride_, count_;
};

/// Number of windows: floor((t - context - horizon) / stride) + 1.
std::size_t window_count(std::size_t length, std::size_t context, std::size_t horizon, std::size_t stride);

WindowSet make_windows(const TimeSeriesFrame& frame, std::size_t context = 120, std::size_t horizon = 10,
                       std::size_t stride = 1);

}  // namespace dyndiff::data
