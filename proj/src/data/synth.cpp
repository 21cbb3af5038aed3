#include "dyndiff/data/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dyndiff/rng.hpp"

namespace dyndiff::data {

namespace {

struct KindName {
  SynthKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {{SynthKind::ar2_seasonal, "ar2_seasonal"},
                               {SynthKind::regime_switch_bimodal, "regime_switch_bimodal"},
                               {SynthKind::random_walk, "random_walk"},
                               {SynthKind::constant, "constant"}};

}  // namespace

std::vector<std::string> synth_kind_names() {
  std::vector<std::string> out;
  for (const auto& k : kKinds) out.emplace_back(k.name);
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  std::string list;
  for (const auto& k : kKinds) list += (list.empty() ? "" : ", ") + std::string(k.name);
  throw std::invalid_argument("unknown synthetic kind '" + name + "' (expected one of: " + list + ")");
}

std::string synth_kind_name(SynthKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  throw std::invalid_argument("invalid synthetic kind");
}

SynthSeries synth_generate(SynthKind kind, std::size_t length, std::uint64_t seed) {
  if (length == 0) throw std::invalid_argument("synthetic series length must be >= 1");
  Rng rng(seed);
  SynthSeries out;
  auto& f = out.frame;
  const double two_pi = 2.0 * std::numbers::pi;

  switch (kind) {
    case SynthKind::ar2_seasonal: {
      f.names = {"latency", "load"};
      double a1 = 0.0, a2 = 0.0;
      for (std::size_t t = 0; t < length; ++t) {
        const double a = 0.7 * a1 - 0.2 * a2 + 0.5 * rng.normal();
        a2 = a1;
        a1 = a;
        const double phase = two_pi * static_cast<double>(t) / 24.0;
        f.values.push_back(2.0 * std::sin(phase) + a);
        f.values.push_back(1.0 + 0.5 * std::cos(phase) + 0.3 * rng.normal());
      }
      break;
    }
    case SynthKind::regime_switch_bimodal: {
      f.names = {"latency", "regime_signal"};
      const double mu[2] = {0.0, 6.0};
      double x[2] = {mu[0], mu[1]};
      int r = 0;
      for (std::size_t t = 0; t < length; ++t) {
        if (t > 0 && rng.uniform() >= 0.98) r = 1 - r;
        for (int k = 0; k < 2; ++k) x[k] = mu[k] + 0.8 * (x[k] - mu[k]) + 0.5 * rng.normal();
        out.regime.push_back(r);
        f.values.push_back(x[r]);
        f.values.push_back(r + 0.1 * rng.normal());
      }
      break;
    }
    case SynthKind::random_walk: {
      f.names = {"value"};
      double v = 0.0;
      for (std::size_t t = 0; t < length; ++t) {
        v += rng.normal();
        f.values.push_back(v);
      }
      break;
    }
    case SynthKind::constant: {
      f.names = {"value"};
      f.values.assign(length, 5.0);
      break;
    }
  }
  for (std::size_t t = 0; t < length; ++t) f.timestamps.push_back(std::to_string(t));
  f.targets = {0};
  return out;
}

}  // namespace dyndiff::data
