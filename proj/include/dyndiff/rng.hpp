#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace dyndiff {

/// Seeded random source. Streams derived from (master seed, stream index)
/// are independent of how many other streams exist, which is what makes
/// ensemble paths reproducible one by one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng derive(std::uint64_t master_seed, std::uint64_t stream);
  /// Two-level stream, e.g. (window origin, path index).
  static Rng derive(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream);

  double normal();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [lo, hi].
  long uniform_int(long lo, long hi);
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<long>(n) - 1));
  }

  /// Serialised engine + distribution state, restorable with restore().
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace dyndiff
