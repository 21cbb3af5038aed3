#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dyndiff/encoder/context_encoder.hpp"
#include "dyndiff/numerics/parameters.hpp"
#include "dyndiff/numerics/tensor.hpp"
#include "dyndiff/rng.hpp"

// Noise-prediction network eps_theta(x_s, s, e). Noised targets are
// time-major, [batch, p, n].

namespace dyndiff::denoiser {

using numerics::ParameterStore;
using numerics::Tensor;

inline const std::string kPrefix = "denoiser.";

struct DenoiserConfig {
  std::size_t n_vars = 1;
  std::size_t horizon = 10;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t res_blocks = 2;
  std::size_t ff_dim = 256;
  std::size_t kernel = 3;  // odd; residual convolutions are centred

  /// Throws std::invalid_argument on zero sizes, odd d_model, an even
  /// kernel, or d_model not divisible by heads.
  void validate() const;
};

struct StepEmbedding {
  int s = 0;
  std::vector<double> vec;  // [d_model]
};

/// Sinusoidal encoding: vec[2i] = sin(s / 10000^(2i/d)), vec[2i+1] = cos(same).
StepEmbedding embed_step(int s, std::size_t d_model);

/// Embeddings of several steps stacked into [batch, d_model].
template <typename T>
Tensor<T> embed_steps(const std::vector<int>& steps, std::size_t d_model);

/// Registers all denoiser parameters under "denoiser.".
template <typename T>
void init_denoiser(const DenoiserConfig& cfg, ParameterStore<T>& params, Rng& rng);

/// h [batch, p, d] + W_e e + W_s emb, both terms repeated over the p
/// positions. `group` names the weight pair, e.g. "denoiser.cond0.".
template <typename T>
Tensor<T> condition_inject(const Tensor<T>& h, const Tensor<T>& latent, const Tensor<T>& emb,
                           const ParameterStore<T>& params, const std::string& group);

template <typename T>
struct DenoiserTrace {
  Tensor<T> attention;  // [batch * heads, p, p]
};

/// xs [batch, p, n], one diffusion step per item, latent [batch, d_model].
/// Returns the predicted noise, same shape as xs.
template <typename T>
Tensor<T> predict_noise(const Tensor<T>& xs, const std::vector<int>& steps, const Tensor<T>& latent,
                        const DenoiserConfig& cfg, const ParameterStore<T>& params,
                        DenoiserTrace<T>* trace = nullptr);

/// Single-window form: xs [p, n].
template <typename T>
Tensor<T> predict_noise(const Tensor<T>& xs, int s, const encoder::LatentContext<T>& e, const DenoiserConfig& cfg,
                        const ParameterStore<T>& params);

}  // namespace dyndiff::denoiser
