#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyndiff/data/frame.hpp"

// Synthetic series. With e_t, u_t, v_t independent N(0, 1) draws:
//
//   ar2_seasonal           a_t = 0.7 a_{t-1} - 0.2 a_{t-2} + 0.5 e_t
//                          latency_t = 2 sin(2 pi t / 24) + a_t
//                          load_t    = 1 + 0.5 cos(2 pi t / 24) + 0.3 u_t
//   regime_switch_bimodal  r_t in {0, 1}, a Markov chain that keeps its state
//                          with probability 0.98 (r_0 = 0)
//                          x^k_t = mu_k + 0.8 (x^k_{t-1} - mu_k) + 0.5 e^k_t,
//                          mu = (0, 6), both chains always running
//                          latency_t       = x^{r_t}_t
//                          regime_signal_t = r_t + 0.1 v_t
//   random_walk            value_t = value_{t-1} + e_t, value_0 = e_0
//   constant               value_t = 5

namespace dyndiff::data {

enum class SynthKind { ar2_seasonal, regime_switch_bimodal, random_walk, constant };

/// Throws std::invalid_argument listing the valid kinds.
SynthKind parse_synth_kind(const std::string& name);
std::string synth_kind_name(SynthKind kind);
std::vector<std::string> synth_kind_names();

struct SynthSeries {
  TimeSeriesFrame frame;   // first column is the natural forecast target
  std::vector<int> regime;  // latent state per step; empty unless regime-switching
};

/// Pure function of (kind, length, seed). Timestamps are 0..length-1 and
/// the first column is marked as the target.
SynthSeries synth_generate(SynthKind kind, std::size_t length, std::uint64_t seed);

}  // namespace dyndiff::data
