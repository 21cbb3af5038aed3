#include "dyndiff/encoder/context_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::encoder {

namespace ops = dyndiff::numerics;

void EncoderConfig::validate() const {
  if (in_vars == 0 || channels == 0 || layers == 0 || kernel == 0 || dilation_base == 0 || latent_dim == 0) {
    throw std::invalid_argument("encoder config: in_vars, channels, layers, kernel, dilation_base and "
                                "latent_dim must all be >= 1");
  }
}

std::size_t block_dilation(const EncoderConfig& cfg, std::size_t layer) {
  std::size_t d = 1;
  for (std::size_t i = 0; i < layer; ++i) d *= cfg.dilation_base;
  return d;
}

std::size_t receptive_field(const EncoderConfig& cfg) {
  std::size_t span = 0;
  for (std::size_t l = 0; l < cfg.layers; ++l) span += block_dilation(cfg, l);
  return 1 + 2 * (cfg.kernel - 1) * span;
}

std::size_t receptive_field_single_conv(const EncoderConfig& cfg) {
  std::size_t span = 0;
  for (std::size_t l = 0; l < cfg.layers; ++l) span += block_dilation(cfg, l);
  return 1 + (cfg.kernel - 1) * span;
}

template <typename T>
void init_encoder(const EncoderConfig& cfg, ParameterStore<T>& params, Rng& rng, const std::string& prefix) {
  cfg.validate();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string block = prefix + "block" + std::to_string(l) + ".";
    const std::size_t in = l == 0 ? cfg.in_vars : cfg.channels;
    params.add_normal(block + "conv1.w", {cfg.kernel, in, cfg.channels},
                      std::sqrt(2.0 / static_cast<double>(cfg.kernel * in)), rng);
    params.add_zeros(block + "conv1.b", {cfg.channels});
    params.add_normal(block + "conv2.w", {cfg.kernel, cfg.channels, cfg.channels},
                      std::sqrt(2.0 / static_cast<double>(cfg.kernel * cfg.channels)), rng);
    params.add_zeros(block + "conv2.b", {cfg.channels});
    if (in != cfg.channels) {
      params.add_normal(block + "skip.w", {in, cfg.channels}, std::sqrt(1.0 / static_cast<double>(in)), rng);
      params.add_zeros(block + "skip.b", {cfg.channels});
    }
  }
  params.add_normal(prefix + "out.w", {cfg.channels, cfg.latent_dim},
                    std::sqrt(1.0 / static_cast<double>(cfg.channels)), rng);
  params.add_zeros(prefix + "out.b", {cfg.latent_dim});
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& h, std::size_t dilation, const ParameterStore<T>& params,
                         const std::string& block) {
  if (dilation < 1) throw std::invalid_argument("residual_block: dilation must be >= 1");
  auto y = ops::conv1d(h, params.at(block + "conv1.w"), params.at(block + "conv1.b"), dilation,
                       ops::Padding::causal);
  y = ops::relu(y);
  y = ops::conv1d(y, params.at(block + "conv2.w"), params.at(block + "conv2.b"), dilation,
                  ops::Padding::causal);
  y = ops::relu(y);
  if (params.contains(block + "skip.w")) {
    return ops::add(y, ops::dense(h, params.at(block + "skip.w"), params.at(block + "skip.b")));
  }
  return ops::add(y, h);
}

namespace {

template <typename T>
void check_window(const Tensor<T>& x, const EncoderConfig& cfg) {
  if (x.rank() != 3 || x.dim(2) != cfg.in_vars) {
    throw numerics::ShapeError("encode_context: expected [batch, c, " + std::to_string(cfg.in_vars) +
                               "], got " + numerics::shape_str(x.shape()));
  }
  if (x.dim(1) == 0) throw numerics::ShapeError("encode_context: empty context window (c = 0)");
  for (T v : x.data()) {
    if (!std::isfinite(v)) throw numerics::NumericError("encode_context: non-finite value in context window");
  }
}

}  // namespace

template <typename T>
Tensor<T> encoder_features(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                           const std::string& prefix) {
  cfg.validate();
  check_window(x, cfg);
  Tensor<T> h = x;
  for (std::size_t l = 0; l < cfg.layers; ++l)
    h = residual_block(h, block_dilation(cfg, l), params, prefix + "block" + std::to_string(l) + ".");
  return ops::dense(h, params.at(prefix + "out.w"), params.at(prefix + "out.b"));
}

template <typename T>
Tensor<T> encode_batch(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                       const std::string& prefix) {
  cfg.validate();
  check_window(x, cfg);
  const std::size_t c = x.dim(1);
  const std::size_t keep = std::min(c, receptive_field(cfg));
  const Tensor<T> recent = keep == c ? x : ops::slice(x, 1, c - keep, keep);
  auto features = encoder_features(recent, cfg, params, prefix);
  return ops::select(features, 1, keep - 1);
}

template <typename T>
LatentContext<T> encode_context(const Tensor<T>& x, const EncoderConfig& cfg, const ParameterStore<T>& params,
                                const std::string& prefix) {
  if (x.rank() != 2) {
    throw numerics::ShapeError("encode_context: expected [c, m], got " + numerics::shape_str(x.shape()));
  }
  auto batched = ops::reshape(x, {1, x.dim(0), x.dim(1)});
  auto e = ops::reshape(encode_batch(batched, cfg, params, prefix), {cfg.latent_dim});
  return {e, x.dim(0) - 1};
}

#define DYNDIFF_INSTANTIATE_ENCODER(T)                                                                    \
  template void init_encoder(const EncoderConfig&, ParameterStore<T>&, Rng&, const std::string&);        \
  template Tensor<T> residual_block(const Tensor<T>&, std::size_t, const ParameterStore<T>&,             \
                                    const std::string&);                                                 \
  template Tensor<T> encoder_features(const Tensor<T>&, const EncoderConfig&, const ParameterStore<T>&,  \
                                      const std::string&);                                               \
  template Tensor<T> encode_batch(const Tensor<T>&, const EncoderConfig&, const ParameterStore<T>&,      \
                                  const std::string&);                                                   \
  template LatentContext<T> encode_context(const Tensor<T>&, const EncoderConfig&,                       \
                                           const ParameterStore<T>&, const std::string&);

DYNDIFF_INSTANTIATE_ENCODER(float)
DYNDIFF_INSTANTIATE_ENCODER(double)

#undef DYNDIFF_INSTANTIATE_ENCODER

}  // namespace dyndiff::encoder
