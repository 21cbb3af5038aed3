#pragma once

#include <functional>
#include <vector>

#include "dyndiff/diffusion/schedule.hpp"
#include "dyndiff/numerics/tensor.hpp"
#include "dyndiff/rng.hpp"

namespace dyndiff::diffusion {

using numerics::Tensor;

/// Closed-form forward diffusion: sqrt(alpha_bar_s) x0 + sqrt(1 - alpha_bar_s) eps.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int s, const Tensor<T>& eps, const NoiseSchedule& sched);

/// Clean targets, their per-item diffusion steps, the drawn noise and the
/// noised targets. Leading axis of every tensor is the batch.
template <typename T>
struct NoisedBatch {
  Tensor<T> x0;
  Tensor<T> eps;
  Tensor<T> xs;
  std::vector<int> steps;
};

/// Assembles a batch from given steps and noise (q_sample per item).
template <typename T>
NoisedBatch<T> make_noised_batch(const Tensor<T>& x0, std::vector<int> steps, const Tensor<T>& eps,
                                 const NoiseSchedule& sched);

/// Draws one step uniformly from [1, S] per item, then standard normal noise.
template <typename T>
NoisedBatch<T> draw_noised_batch(const Tensor<T>& x0, const NoiseSchedule& sched, Rng& rng);

struct ReverseCoefficients {
  double inv_sqrt_alpha = 1.0;  // 1 / sqrt(alpha_s)
  double eps_scale = 0.0;       // (1 - alpha_s) / sqrt(1 - alpha_bar_s)
  double sigma = 0.0;

  static ReverseCoefficients at(const NoiseSchedule& sched, int s);
  static ReverseCoefficients from(double alpha, double alpha_bar, double sigma);
};

/// One ancestral step:
///   x_{s-1} = (x_s - eps_scale * eps_hat) / sqrt(alpha_s) + sigma_s z.
/// The final step (s = 1) is deterministic: `z` must be undefined or all
/// zeros there, otherwise std::invalid_argument. For s > 1 `z` is required.
template <typename T>
Tensor<T> reverse_step(const Tensor<T>& xs, int s, const Tensor<T>& eps_hat, const NoiseSchedule& sched,
                       const Tensor<T>& z);

/// Same step with explicit coefficients; `z` may be undefined (no noise).
template <typename T>
Tensor<T> reverse_step(const Tensor<T>& xs, const Tensor<T>& eps_hat, const ReverseCoefficients& c,
                       const Tensor<T>& z);

/// eps_theta(x_s, s, e): predicts the noise of each batch item.
template <typename T>
using NoisePredictor =
    std::function<Tensor<T>(const Tensor<T>& xs, const std::vector<int>& steps, const Tensor<T>& latent)>;

/// Simplified conditional objective: mean over batch and elements of
/// (eps - eps_theta(x_s, s, e))^2.
template <typename T>
Tensor<T> training_loss(const NoisedBatch<T>& batch, const Tensor<T>& latent,
                        const NoisePredictor<T>& denoiser);

}  // namespace dyndiff::diffusion
