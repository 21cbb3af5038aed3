#include "dyndiff/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dyndiff::diffusion {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw std::invalid_argument("noise schedule bounds must satisfy 0 < beta_min <= beta_max < 1, got " +
                                std::to_string(beta_min) + ", " + std::to_string(beta_max));
  }
  NoiseSchedule sched;
  sched.config_ = {steps, beta_min, beta_max};
  const auto n = static_cast<std::size_t>(steps);
  sched.beta_.resize(n);
  sched.alpha_.resize(n);
  sched.alpha_bar_.resize(n);
  sched.sigma_.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const double b = i + 1 == n && n > 1 ? beta_max : beta_min + (beta_max - beta_min) * frac;
    sched.beta_[i] = b;
    sched.alpha_[i] = 1.0 - b;
    running *= 1.0 - b;
    sched.alpha_bar_[i] = running;
    sched.sigma_[i] = std::sqrt(b);
  }
  return sched;
}

std::size_t NoiseSchedule::index(int s) const {
  if (s < 1 || s > steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(s) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(s - 1);
}

}  // namespace dyndiff::diffusion
