#include "dyndiff/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace dyndiff {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::derive(std::uint64_t master_seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  Rng rng;
  rng.engine_.seed(seq);
  return rng;
}

Rng Rng::derive(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream),      static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),   static_cast<std::uint32_t>(substream >> 32),
                    0x7f4a7c15u};
  Rng rng;
  rng.engine_.seed(seq);
  return rng;
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

long Rng::uniform_int(long lo, long hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  return std::uniform_int_distribution<long>(lo, hi)(engine_);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_ >> normal_;
  if (!is) throw std::invalid_argument("malformed RNG state");
}

}  // namespace dyndiff
