#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dyndiff/data/frame.hpp"
#include "dyndiff/forecasting/model.hpp"

namespace dyndiff::forecasting {

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);
  /// Applies one update from the gradients currently held by `params`.
  void step(ParameterStore<float>& params);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore<float>& params, double max_norm);

struct TrainLogEntry {
  std::size_t step = 0;  // 1-based optimizer step
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN unless evaluated at this step
};

struct TrainOutcome {
  Model model;
  std::vector<TrainLogEntry> log;
  std::size_t best_step = 0;  // step whose weights were kept
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
  std::string rng_state;  // batch stream state after the last step
};

/// Raised when the loss or a gradient stops being finite.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Minimizes the simplified diffusion loss over random (context, target)
/// windows drawn with replacement. Streams derived from cfg.seed: 0 weight
/// init, 1 batches and diffusion noise, 2 the fixed validation noise. With
/// validation windows, every eval_every steps the mean validation loss is
/// recorded; after `patience` evaluations without improvement training
/// stops, and the best weights are restored.
TrainOutcome train(const data::WindowSet& train_windows, const data::WindowSet* val_windows, const ModelSpec& spec,
                   const TrainConfig& cfg);

/// Mean loss over fixed noise and fixed steps (a deterministic function of
/// the model and `seed`), evaluated without recording a graph.
double validation_loss(const Model& model, const data::WindowSet& windows, std::size_t max_windows, std::uint64_t seed);

/// "step,loss,grad_norm,val_loss" rows.
std::string format_train_log(const std::vector<TrainLogEntry>& log);

}  // namespace dyndiff::forecasting
