#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyndiff/data/checkpoint.hpp"
#include "dyndiff/denoiser/denoiser.hpp"
#include "dyndiff/diffusion/process.hpp"
#include "dyndiff/diffusion/schedule.hpp"
#include "dyndiff/encoder/context_encoder.hpp"
#include "dyndiff/forecasting/config.hpp"

namespace dyndiff::forecasting {

using numerics::ParameterStore;
using numerics::Tensor;

/// Name of the learned conditioning vector used in unconditional mode.
inline const std::string kBaselineLatent = "baseline.latent";

struct ModelSpec {
  encoder::EncoderConfig encoder;
  denoiser::DenoiserConfig denoiser;
  diffusion::ScheduleConfig schedule;
  bool unconditional = false;

  /// Checks the cross-module invariants (latent width == d_model).
  void validate() const;
};

/// Architecture for data with `in_vars` input columns and `n_vars` targets.
ModelSpec model_spec(const RunConfig& cfg, std::size_t in_vars, std::size_t n_vars);

/// Context encoder and denoiser sharing one parameter store, in float.
/// In unconditional mode the encoder is bypassed: every window is
/// conditioned on the same learned vector, so encoder weights get no
/// gradient and the prediction ignores the context.
class Model {
 public:
  Model(ModelSpec spec, ParameterStore<float> params);
  /// Fresh weights drawn from `rng`.
  static Model initialize(const ModelSpec& spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  const diffusion::NoiseSchedule& schedule() const { return schedule_; }
  ParameterStore<float>& params() { return params_; }
  const ParameterStore<float>& params() const { return params_; }
  std::size_t context_needed() const;

  /// [B, c, m] standardized windows -> [B, d_model].
  Tensor<float> latent(const Tensor<float>& contexts) const;
  Tensor<float> predict_noise(const Tensor<float>& xs, const std::vector<int>& steps, const Tensor<float>& latent) const;
  /// Simplified diffusion loss for one noised batch.
  Tensor<float> loss(const diffusion::NoisedBatch<float>& batch, const Tensor<float>& contexts) const;

 private:
  ModelSpec spec_;
  diffusion::NoiseSchedule schedule_;
  ParameterStore<float> params_;
};

/// A trained model with everything needed to score new data.
struct TrainedModel {
  Model model;
  RunConfig config;
  std::vector<std::string> variables;
  std::vector<std::string> targets;
  std::vector<data::VariableStats> stats;  // per input column
  std::string rng_state;

  /// Stats of target j (in target order).
  const data::VariableStats& target_stats(std::size_t j) const;
  std::vector<std::size_t> target_columns() const;
};

data::Checkpoint to_checkpoint(const TrainedModel& trained);
/// Rebuilds the model; throws std::runtime_error if a parameter is missing,
/// unexpected, or has the wrong shape.
TrainedModel from_checkpoint(const data::Checkpoint& ckpt);

}  // namespace dyndiff::forecasting
