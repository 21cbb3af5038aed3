#include "dyndiff/data/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dyndiff::data {

std::size_t TimeSeriesFrame::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("column '" + name + "' not found");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::string> TimeSeriesFrame::target_names() const {
  std::vector<std::string> out;
  for (auto j : targets) out.push_back(names[j]);
  return out;
}

TimeSeriesFrame TimeSeriesFrame::rows(std::size_t start, std::size_t count) const {
  if (start + count > length()) throw std::out_of_range("frame rows out of range");
  TimeSeriesFrame out;
  out.names = names;
  out.targets = targets;
  out.stats = stats;
  const std::size_t m = vars();
  out.values.assign(values.begin() + static_cast<long>(start * m),
                    values.begin() + static_cast<long>((start + count) * m));
  if (!timestamps.empty()) {
    out.timestamps.assign(timestamps.begin() + static_cast<long>(start),
                          timestamps.begin() + static_cast<long>(start + count));
  }
  return out;
}

void set_targets(TimeSeriesFrame& frame, const std::vector<std::string>& targets) {
  if (targets.empty()) throw std::invalid_argument("no target columns named");
  frame.targets.clear();
  for (const auto& t : targets) {
    auto it = std::find(frame.names.begin(), frame.names.end(), t);
    if (it == frame.names.end()) throw std::invalid_argument("target column '" + t + "' not found in header");
    const auto j = static_cast<std::size_t>(it - frame.names.begin());
    if (std::find(frame.targets.begin(), frame.targets.end(), j) != frame.targets.end())
      throw std::invalid_argument("target column '" + t + "' named twice");
    frame.targets.push_back(j);
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) {
  std::string lower(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan";
}

bool parse_double(const std::string& cell, double& out) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

TimeSeriesFrame parse_csv(const std::string& text, const std::vector<std::string>& target_columns,
                          const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw std::runtime_error(source + ": empty file (no header row)");

  auto header = split_fields(line);
  const bool has_time = !header.empty() && lowercase(header.front()) == "timestamp";
  TimeSeriesFrame frame;
  frame.names.assign(header.begin() + (has_time ? 1 : 0), header.end());
  if (frame.names.empty()) throw std::runtime_error(source + ": header names no variables");
  for (const auto& n : frame.names) {
    if (n.empty()) throw std::runtime_error(source + ": empty column name in header");
    if (std::count(frame.names.begin(), frame.names.end(), n) > 1)
      throw std::runtime_error(source + ": duplicate column '" + n + "'");
  }
  const std::size_t m = frame.names.size();

  while (next_line()) {
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    if (has_time) frame.timestamps.push_back(fields.front());
    const bool first = frame.values.empty();
    for (std::size_t j = 0; j < m; ++j) {
      const auto& cell = fields[j + (has_time ? 1 : 0)];
      double v = 0.0;
      if (is_missing(cell)) {
        if (first) {
          throw std::runtime_error(source + ": line " + std::to_string(line_no) + ", column '" + frame.names[j] +
                                   "': missing value with no earlier value to carry forward");
        }
        v = frame.values[frame.values.size() - m];
      } else if (!parse_double(cell, v)) {
        throw std::runtime_error(source + ": line " + std::to_string(line_no) + ", column '" + frame.names[j] +
                                 "': cannot parse '" + cell + "' as a number");
      }
      frame.values.push_back(v);
    }
  }
  if (frame.values.empty()) throw std::runtime_error(source + ": no data rows");
  set_targets(frame, target_columns);
  return frame;
}

TimeSeriesFrame load_csv(const std::string& path, const std::vector<std::string>& target_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), target_columns, path);
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

std::string format_csv(const TimeSeriesFrame& frame) {
  std::string out;
  const bool has_time = !frame.timestamps.empty();
  if (has_time) out += "timestamp,";
  for (std::size_t j = 0; j < frame.vars(); ++j) out += (j ? "," : "") + frame.names[j];
  out += '\n';
  for (std::size_t i = 0; i < frame.length(); ++i) {
    if (has_time) out += frame.timestamps[i] + ",";
    for (std::size_t j = 0; j < frame.vars(); ++j) out += (j ? "," : "") + format_number(frame.at(i, j));
    out += '\n';
  }
  return out;
}

void write_csv(const TimeSeriesFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << format_csv(frame);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<VariableStats> fit_stats(const TimeSeriesFrame& frame, std::vector<std::string>* warnings) {
  const std::size_t m = frame.vars(), t = frame.length();
  if (t == 0) throw std::invalid_argument("cannot fit standardization stats on an empty frame");
  std::vector<VariableStats> stats(m);
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < t; ++i) mean += frame.at(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) var += (frame.at(i, j) - mean) * (frame.at(i, j) - mean);
    var /= static_cast<double>(t);
    double sd = std::sqrt(var);
    if (!(sd >= kMinStd)) {
      if (warnings) warnings->push_back("variable '" + frame.names[j] + "' has (near) zero variance; std floored");
      sd = kMinStd;
    }
    stats[j] = {mean, sd};
  }
  return stats;
}

TimeSeriesFrame standardize(const TimeSeriesFrame& frame, const std::vector<VariableStats>& stats) {
  if (stats.size() != frame.vars()) throw std::invalid_argument("standardize: stats do not match variable count");
  TimeSeriesFrame out = frame;
  out.stats = stats;
  const std::size_t m = frame.vars();
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = standardize_value(out.values[k], stats[k % m]);
  return out;
}

FrameSplit split(const TimeSeriesFrame& frame, const SplitRatios& r, std::size_t min_length) {
  if (!(r.train > 0.0) || !(r.val > 0.0) || !(r.test > 0.0))
    throw std::invalid_argument("split ratios must all be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  const std::size_t t = frame.length();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(t) * r.train));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(t) * r.val));
  if (n_train + n_val >= t) throw std::invalid_argument("split leaves no test segment");
  const std::size_t n_test = t - n_train - n_val;
  auto check = [min_length](const char* name, std::size_t n) {
    if (n < min_length) {
      throw std::invalid_argument(std::string(name) + " segment has " + std::to_string(n) +
                                  " steps, fewer than context + horizon = " + std::to_string(min_length));
    }
  };
  check("train", n_train);
  check("validation", n_val);
  check("test", n_test);
  return {frame.rows(0, n_train), frame.rows(n_train, n_val), frame.rows(n_train + n_val, n_test), n_train,
          n_train + n_val};
}

std::size_t window_count(std::size_t length, std::size_t context, std::size_t horizon, std::size_t stride) {
  if (context == 0 || horizon == 0 || stride == 0)
    throw std::invalid_argument("context, horizon and stride must be >= 1");
  if (length < context + horizon) {
    throw std::invalid_argument("series of length " + std::to_string(length) + " is shorter than context + horizon = " +
                                std::to_string(context + horizon));
  }
  return (length - context - horizon) / stride + 1;
}

WindowSet::WindowSet(std::shared_ptr<const TimeSeriesFrame> frame, std::size_t context, std::size_t horizon,
                     std::size_t stride)
    : frame_(std::move(frame)), context_(context), horizon_(horizon), stride_(stride) {
  if (frame_->targets.empty()) throw std::invalid_argument("windows need at least one target column");
  count_ = window_count(frame_->length(), context, horizon, stride);
}

template <typename T>
numerics::Tensor<T> WindowSet::contexts(const std::vector<std::size_t>& indices) const {
  const std::size_t m = frame_->vars();
  std::vector<T> out;
  out.reserve(indices.size() * context_ * m);
  for (auto i : indices) {
    if (i >= count_) throw std::out_of_range("window index out of range");
    const auto* row = frame_->values.data() + start(i) * m;
    for (std::size_t k = 0; k < context_ * m; ++k) out.push_back(static_cast<T>(row[k]));
  }
  return numerics::Tensor<T>::from_data({indices.size(), context_, m}, std::move(out));
}

template <typename T>
numerics::Tensor<T> WindowSet::targets(const std::vector<std::size_t>& indices) const {
  const auto& tg = frame_->targets;
  std::vector<T> out;
  out.reserve(indices.size() * horizon_ * tg.size());
  for (auto i : indices) {
    if (i >= count_) throw std::out_of_range("window index out of range");
    for (std::size_t s = 0; s < horizon_; ++s)
      for (auto j : tg) out.push_back(static_cast<T>(frame_->at(start(i) + context_ + s, j)));
  }
  return numerics::Tensor<T>::from_data({indices.size(), horizon_, tg.size()}, std::move(out));
}

template numerics::Tensor<float> WindowSet::contexts<float>(const std::vector<std::size_t>&) const;
template numerics::Tensor<double> WindowSet::contexts<double>(const std::vector<std::size_t>&) const;
template numerics::Tensor<float> WindowSet::targets<float>(const std::vector<std::size_t>&) const;
template numerics::Tensor<double> WindowSet::targets<double>(const std::vector<std::size_t>&) const;

WindowSet make_windows(const TimeSeriesFrame& frame, std::size_t context, std::size_t horizon, std::size_t stride) {
  return WindowSet(std::make_shared<const TimeSeriesFrame>(frame), context, horizon, stride);
}

}  // namespace dyndiff::data
