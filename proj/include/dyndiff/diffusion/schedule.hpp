#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dyndiff::diffusion {

struct ScheduleConfig {
  int steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.5;
};

/// Linear variance schedule over S diffusion steps, indexed 1..S.
///
/// beta_s grows linearly from beta_min to beta_max; alpha_s = 1 - beta_s;
/// alpha_bar_s is the running product of alpha; the reverse-step standard
/// deviation is fixed to sigma_s = sqrt(beta_s).
class NoiseSchedule {
 public:
  /// Throws std::invalid_argument unless steps >= 1 and
  /// 0 < beta_min <= beta_max < 1.
  static NoiseSchedule linear(int steps, double beta_min, double beta_max);
  static NoiseSchedule from_config(const ScheduleConfig& cfg) {
    return linear(cfg.steps, cfg.beta_min, cfg.beta_max);
  }

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int s) const { return beta_[index(s)]; }
  double alpha(int s) const { return alpha_[index(s)]; }
  double alpha_bar(int s) const { return alpha_bar_[index(s)]; }
  double sigma(int s) const { return sigma_[index(s)]; }

  std::span<const double> betas() const noexcept { return beta_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

  ScheduleConfig config() const noexcept { return config_; }

 private:
  std::size_t index(int s) const;

  ScheduleConfig config_;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

}  // namespace dyndiff::diffusion
