#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dyndiff::evaluation {

/// Mean absolute deviation; throws std::invalid_argument on a size mismatch
/// or empty input.
double mae(std::span<const double> point, std::span<const double> truth);
/// Mean squared deviation, same contract as mae.
double mse(std::span<const double> point, std::span<const double> truth);

/// Continuous ranked probability score of the empirical distribution of
/// `samples` against observation x, via the energy form
///   mean_i |X_i - x| - 1/2 mean_{i,j} |X_i - X_j|
/// with the pair term computed from sorted samples in O(K log K).
/// K = 1 reduces to |X_1 - x| exactly. Empty input throws.
double crps(std::span<const double> samples, double x);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values, first == lo, last == hi
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

/// Equal-width bins over [lo, hi]; the last bin is closed. Values outside
/// the range throw. lo == hi puts everything in one degenerate bin.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

struct Bimodality {
  bool found = false;
  std::size_t left = 0, right = 0;  // peak bins
  std::size_t trough = 0;           // lowest bin strictly between them
};

/// Looks for two peaks whose separating trough is below `ratio` times the
/// smaller peak. Among qualifying pairs the one with the tallest smaller
/// peak wins.
Bimodality find_two_modes(const Histogram& h, double ratio);

}  // namespace dyndiff::evaluation
