#pragma once

#include <cstddef>
#include <string>

#include "dyndiff/numerics/parameters.hpp"
#include "dyndiff/numerics/tensor.hpp"
#include "dyndiff/rng.hpp"

// Temporal convolutional context encoder. Inputs are time-major windows
// [batch, c, m]; every per-time feature map is strictly causal.

namespace dyndiff::encoder {

using numerics::ParameterStore;
using numerics::Tensor;

struct EncoderConfig {
  std::size_t in_vars = 1;
  std::size_t channels = 64;
  std::size_t layers = 4;
  std::size_t kernel = 3;
  std::size_t dilation_base = 2;
  std::size_t latent_dim = 128;

  /// Throws std::invalid_argument on zero sizes.
  void validate() const;
};

/// Dilation of block l (0-based): dilation_base^l.
std::size_t block_dilation(const EncoderConfig& cfg, std::size_t layer);

/// Number of past steps (including the current one) that can influence a
/// feature at the last layer. Each block stacks two dilated convolutions, so
/// this is 1 + 2 (kernel - 1) sum_l dilation_l.
std::size_t receptive_field(const EncoderConfig& cfg);

/// The single-convolution-per-layer closed form
/// 1 + (kernel - 1)(base^layers - 1)/(base - 1); a lower bound on the above.
std::size_t receptive_field_single_conv(const EncoderConfig& cfg);

/// The conditioning vector e^j for one window.
template <typename T>
struct LatentContext {
  Tensor<T> e;                  // [latent_dim]
  std::size_t source_end = 0;   // index of the last context step
};

/// Registers encoder parameters under `prefix` ("encoder." by default).
/// Convolutions and dense maps use fan-in (He) scaling, biases start at zero.
template <typename T>
void init_encoder(const EncoderConfig& cfg, ParameterStore<T>& params, Rng& rng,
                  const std::string& prefix = "encoder.");

/// conv -> ReLU -> conv -> ReLU plus skip(h), both convolutions causal with
/// the given dilation. skip is the identity when channel counts match and a
/// learned 1x1 projection otherwise. `block` names the parameter group,
/// e.g. "encoder.block0.".
template <typename T>
Tensor<T> residual_block(const Tensor<T>& h, std::size_t dilation, const ParameterStore<T>& params,
                         const std::string& block);

/// Per-time latent features [batch, c, latent_dim] over the whole window.
template <typename T>
Tensor<T> encoder_features(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                           const std::string& prefix = "encoder.");

/// e for each window of x [batch, c, m]: the projected features at the last
/// step, [batch, latent_dim]. Only the last min(c, receptive_field) steps
/// are computed; the result equals the full computation exactly.
template <typename T>
Tensor<T> encode_batch(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                       const std::string& prefix = "encoder.");

/// Single window x [c, m].
template <typename T>
LatentContext<T> encode_context(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                                const std::string& prefix = "encoder.");

}  // namespace dyndiff::encoder
