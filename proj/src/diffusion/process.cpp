#include "dyndiff/diffusion/process.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::diffusion {

namespace {

void require_same_shape(const char* what, const numerics::Shape& a, const numerics::Shape& b) {
  if (a != b) {
    throw numerics::ShapeError(std::string(what) + ": shape " + numerics::shape_str(a) +
                               " does not match " + numerics::shape_str(b));
  }
}

}  // namespace

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int s, const Tensor<T>& eps, const NoiseSchedule& sched) {
  require_same_shape("q_sample", x0.shape(), eps.shape());
  const T signal = static_cast<T>(std::sqrt(sched.alpha_bar(s)));
  const T noise = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(s)));
  std::vector<T> out(x0.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0.data()[i] + noise * eps.data()[i];
  return Tensor<T>::from_data(x0.shape(), std::move(out));
}

template <typename T>
NoisedBatch<T> make_noised_batch(const Tensor<T>& x0, std::vector<int> steps, const Tensor<T>& eps,
                                 const NoiseSchedule& sched) {
  require_same_shape("noised batch", x0.shape(), eps.shape());
  const std::size_t batch = x0.dim(0);
  if (steps.size() != batch) {
    throw numerics::ShapeError("noised batch: " + std::to_string(steps.size()) + " steps for batch of " +
                               std::to_string(batch));
  }
  const std::size_t item = x0.numel() / batch;
  std::vector<T> xs(x0.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    const T signal = static_cast<T>(std::sqrt(sched.alpha_bar(steps[b])));
    const T noise = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(steps[b])));
    for (std::size_t i = b * item; i < (b + 1) * item; ++i)
      xs[i] = signal * x0.data()[i] + noise * eps.data()[i];
  }
  return {x0, eps, Tensor<T>::from_data(x0.shape(), std::move(xs)), std::move(steps)};
}

template <typename T>
NoisedBatch<T> draw_noised_batch(const Tensor<T>& x0, const NoiseSchedule& sched, Rng& rng) {
  const std::size_t batch = x0.dim(0);
  const std::size_t item = x0.numel() / batch;
  std::vector<int> steps(batch);
  std::vector<T> eps(x0.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    steps[b] = static_cast<int>(rng.uniform_int(1, sched.steps()));
    for (std::size_t i = 0; i < item; ++i) eps[b * item + i] = static_cast<T>(rng.normal());
  }
  return make_noised_batch(x0, std::move(steps), Tensor<T>::from_data(x0.shape(), std::move(eps)), sched);
}

ReverseCoefficients ReverseCoefficients::from(double alpha, double alpha_bar, double sigma) {
  return {1.0 / std::sqrt(alpha), (1.0 - alpha) / std::sqrt(1.0 - alpha_bar), sigma};
}

ReverseCoefficients ReverseCoefficients::at(const NoiseSchedule& sched, int s) {
  return from(sched.alpha(s), sched.alpha_bar(s), sched.sigma(s));
}

template <typename T>
Tensor<T> reverse_step(const Tensor<T>& xs, const Tensor<T>& eps_hat, const ReverseCoefficients& c,
                       const Tensor<T>& z) {
  require_same_shape("reverse_step", xs.shape(), eps_hat.shape());
  if (z.defined()) require_same_shape("reverse_step", xs.shape(), z.shape());
  const T inv_sqrt_alpha = static_cast<T>(c.inv_sqrt_alpha);
  const T eps_scale = static_cast<T>(c.eps_scale);
  const T sigma = static_cast<T>(c.sigma);
  std::vector<T> out(xs.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (xs.data()[i] - eps_scale * eps_hat.data()[i]);
    if (z.defined()) out[i] += sigma * z.data()[i];
  }
  for (T v : out) {
    if (!std::isfinite(v)) throw numerics::NumericError("reverse_step produced a non-finite value");
  }
  return Tensor<T>::from_data(xs.shape(), std::move(out));
}

template <typename T>
Tensor<T> reverse_step(const Tensor<T>& xs, int s, const Tensor<T>& eps_hat, const NoiseSchedule& sched,
                       const Tensor<T>& z) {
  const auto coeffs = ReverseCoefficients::at(sched, s);  // validates s
  if (s == 1) {
    if (z.defined()) {
      for (T v : z.data()) {
        if (v != T(0)) throw std::invalid_argument("reverse_step: the final step (s = 1) takes no noise");
      }
    }
    return reverse_step(xs, eps_hat, coeffs, Tensor<T>{});
  }
  if (!z.defined()) throw std::invalid_argument("reverse_step: noise z is required for s > 1");
  return reverse_step(xs, eps_hat, coeffs, z);
}

template <typename T>
Tensor<T> training_loss(const NoisedBatch<T>& batch, const Tensor<T>& latent,
                        const NoisePredictor<T>& denoiser) {
  auto eps_hat = denoiser(batch.xs, batch.steps, latent);
  if (eps_hat.shape() != batch.eps.shape()) {
    throw numerics::ShapeError("training_loss: denoiser output " + numerics::shape_str(eps_hat.shape()) +
                               " does not match noise " + numerics::shape_str(batch.eps.shape()));
  }
  return numerics::mse(batch.eps, eps_hat);
}

#define DYNDIFF_INSTANTIATE_DIFFUSION(T)                                                            \
  template Tensor<T> q_sample(const Tensor<T>&, int, const Tensor<T>&, const NoiseSchedule&);      \
  template NoisedBatch<T> make_noised_batch(const Tensor<T>&, std::vector<int>, const Tensor<T>&,  \
                                            const NoiseSchedule&);                                 \
  template NoisedBatch<T> draw_noised_batch(const Tensor<T>&, const NoiseSchedule&, Rng&);         \
  template Tensor<T> reverse_step(const Tensor<T>&, const Tensor<T>&, const ReverseCoefficients&,  \
                                  const Tensor<T>&);                                               \
  template Tensor<T> reverse_step(const Tensor<T>&, int, const Tensor<T>&, const NoiseSchedule&,   \
                                  const Tensor<T>&);                                               \
  template Tensor<T> training_loss(const NoisedBatch<T>&, const Tensor<T>&, const NoisePredictor<T>&);

DYNDIFF_INSTANTIATE_DIFFUSION(float)
DYNDIFF_INSTANTIATE_DIFFUSION(double)

#undef DYNDIFF_INSTANTIATE_DIFFUSION

}  // namespace dyndiff::diffusion
