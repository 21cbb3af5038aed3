#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dyndiff/data/config_file.hpp"
#include "dyndiff/data/frame.hpp"
#include "dyndiff/denoiser/denoiser.hpp"
#include "dyndiff/diffusion/schedule.hpp"
#include "dyndiff/encoder/context_encoder.hpp"

namespace dyndiff::forecasting {

struct DataConfig {
  std::vector<std::string> targets;
  data::SplitRatios split;
  std::size_t stride = 1;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::size_t context = 120;
  std::size_t horizon = 10;
  bool unconditional = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::size_t eval_every = 100;   // validation interval in optimizer steps
  std::size_t patience = 10;      // validation evaluations without improvement
  std::size_t val_windows = 256;  // validation windows scored per evaluation

  /// Throws std::invalid_argument when a size is zero or a rate is not positive.
  void validate() const;
};

struct ForecastConfig {
  std::size_t samples = 100;
  std::size_t horizon = 10;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::vector<std::size_t> horizons{1, 4, 7, 10};
  std::size_t windows = 0;  // 0: every test window
  std::size_t stride = 1;   // spacing of test windows
  std::size_t trials = 1;
};

/// Every setting of a run. Encoder latent width and denoiser width are one
/// value, `model.d_model`.
struct RunConfig {
  DataConfig data;
  encoder::EncoderConfig encoder;
  denoiser::DenoiserConfig denoiser;
  diffusion::ScheduleConfig diffusion;
  TrainConfig train;
  ForecastConfig forecast;
  EvalConfig eval;

  RunConfig();
  void set_d_model(std::size_t d);
};

/// Known configuration keys, sorted.
std::vector<std::string> known_keys();

/// Applies `kv` on top of `cfg`. Unknown keys and unparseable values throw
/// std::invalid_argument naming the key.
void apply_key_values(RunConfig& cfg, const data::KeyValues& kv);

/// Every key with its current value; apply_key_values inverts it.
data::KeyValues to_key_values(const RunConfig& cfg);

/// 64-bit FNV-1a of the canonical key/value text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace dyndiff::forecasting
