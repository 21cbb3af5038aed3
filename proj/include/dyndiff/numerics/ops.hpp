#pragma once

#include <cstddef>
#include <vector>

#include "dyndiff/numerics/tensor.hpp"

// Differentiable operators. Layout conventions: sequences are time-major and
// channel-last, [batch, time, channels]; weights of dense layers are
// [in, out]; convolution kernels are [taps, in, out].

namespace dyndiff::numerics {

enum class Padding {
  causal,  // left padding only: output t sees inputs <= t
  same,    // centred kernel (odd tap count), bidirectional
};

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

/// a + b where b's shape equals the trailing dims of a's shape.
template <typename T> Tensor<T> add_broadcast(const Tensor<T>& a, const Tensor<T>& b);

/// x [B, T, D] + v [B, D], v repeated along the time axis.
template <typename T> Tensor<T> add_over_time(const Tensor<T>& x, const Tensor<T>& v);

/// a [M, K] * b [K, N].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Batched product a [G, M, K] * b [G, K, N], or a * b^T with b [G, N, K].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Affine map of the last axis: x [..., in] * weight [in, out] + bias [out].
/// `bias` may be undefined.
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// 1-D convolution over the time axis of x [B, T, in] with
/// weight [taps, in, out]. Output length equals input length.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t dilation, Padding padding);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalises the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

template <typename T> Tensor<T> softmax(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> silu(const Tensor<T>& x);

/// [B, T, H*dh] -> [B*H, T, dh].
template <typename T> Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);
/// Inverse of split_heads.
template <typename T> Tensor<T> merge_heads(const Tensor<T>& x, std::size_t heads);

template <typename T>
struct AttentionResult {
  Tensor<T> output;   // [B, T, D]
  Tensor<T> weights;  // [B*H, T, T], rows sum to one
};

/// softmax(Q K^T / sqrt(dh)) V per head, for projected q, k, v of shape [B, T, D].
template <typename T>
AttentionResult<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                 const Tensor<T>& v, std::size_t heads);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// mean((a - b)^2) over all elements, as a scalar.
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
/// Sub-range [start, start + length) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
/// Slices index `index` of `axis` and drops that axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

}  // namespace dyndiff::numerics
