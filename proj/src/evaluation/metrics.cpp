#include "dyndiff/evaluation/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dyndiff::evaluation {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a.size()) + " forecasts vs " +
                                std::to_string(b.size()) + " observations");
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": nothing to score");
}

}  // namespace

double mae(std::span<const double> point, std::span<const double> truth) {
  check_pair(point, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) s += std::abs(point[i] - truth[i]);
  return s / static_cast<double>(point.size());
}

double mse(std::span<const double> point, std::span<const double> truth) {
  check_pair(point, truth, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) s += (point[i] - truth[i]) * (point[i] - truth[i]);
  return s / static_cast<double>(point.size());
}

double crps(std::span<const double> samples, double x) {
  if (samples.empty()) throw std::invalid_argument("crps: empty sample set");
  const auto k = static_cast<double>(samples.size());
  double spread_to_obs = 0.0;
  for (double v : samples) spread_to_obs += std::abs(v - x);
  if (samples.size() == 1) return spread_to_obs;

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  // sum_{i<j} (x_(j) - x_(i)): gap g is crossed by g (K - g) pairs
  double pairs = 0.0;
  for (std::size_t g = 1; g < sorted.size(); ++g)
    pairs += (sorted[g] - sorted[g - 1]) * static_cast<double>(g) * (k - static_cast<double>(g));
  return spread_to_obs / k - pairs / (k * k);
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw std::invalid_argument("histogram: need at least one bin");
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("histogram: invalid range");
  Histogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) throw std::invalid_argument("histogram: value outside [lo, hi]");
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    b = std::min(b, bins - 1);
    // Guard against rounding at the computed edges.
    while (b > 0 && v < h.edges[b]) --b;
    while (b + 1 < bins && v >= h.edges[b + 1]) ++b;
    ++h.counts[b];
  }
  return h;
}

Bimodality find_two_modes(const Histogram& h, double ratio) {
  Bimodality best;
  std::size_t best_peak = 0;
  const auto& c = h.counts;
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t trough = i + 1;
    for (std::size_t j = i + 2; j < c.size(); ++j) {
      if (c[j - 1] < c[trough]) trough = j - 1;
      const std::size_t smaller = std::min(c[i], c[j]);
      if (smaller > best_peak && static_cast<double>(c[trough]) < ratio * static_cast<double>(smaller)) {
        best = {true, i, j, trough};
        best_peak = smaller;
      }
    }
  }
  return best;
}

}  // namespace dyndiff::evaluation
