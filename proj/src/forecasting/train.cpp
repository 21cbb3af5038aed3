#include "dyndiff/forecasting/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dyndiff/data/frame.hpp"
#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::forecasting {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterStore<float>& params) {
  if (m_.empty()) {
    for (const auto& [_, t] : params) {
      m_.emplace_back(t.numel(), 0.0f);
      v_.emplace_back(t.numel(), 0.0f);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& [_, t] : params) {
    auto values = t.mutable_data();
    auto grad = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] = static_cast<float>(values[i] - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
    }
    ++k;
  }
}

double clip_grad_norm(ParameterStore<float>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (std::isfinite(norm) && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& [_, t] : params)
      if (t.has_grad())
        for (auto& g : t.mutable_grad()) g *= factor;
  }
  return norm;
}

namespace {

std::vector<std::size_t> spread_indices(std::size_t available, std::size_t wanted) {
  const std::size_t n = std::min(available, wanted);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i * available / n;
  return out;
}

std::string describe(std::size_t step, double loss, double grad_norm, const std::string& cause) {
  std::ostringstream os;
  os << "training diverged at step " << step << " (loss " << loss << ", grad-norm " << grad_norm << "): " << cause;
  return os.str();
}

}  // namespace

double validation_loss(const Model& model, const data::WindowSet& windows, std::size_t max_windows, std::uint64_t seed) {
  numerics::NoGradGuard no_grad;
  const auto indices = spread_indices(windows.size(), max_windows);
  Rng rng = Rng::derive(seed, 2);
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    std::vector<std::size_t> chunk(indices.begin() + static_cast<long>(start),
                                   indices.begin() + static_cast<long>(std::min(indices.size(), start + kChunk)));
    auto targets = windows.targets<float>(chunk);
    auto batch = diffusion::draw_noised_batch(targets, model.schedule(), rng);
    total += static_cast<double>(model.loss(batch, windows.contexts<float>(chunk)).item()) * static_cast<double>(chunk.size());
    count += chunk.size();
  }
  return total / static_cast<double>(count);
}

TrainOutcome train(const data::WindowSet& train_windows, const data::WindowSet* val_windows, const ModelSpec& spec,
                   const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (train_windows.context() != cfg.context || train_windows.horizon() != cfg.horizon)
    throw std::invalid_argument("training windows do not match the configured context/horizon");
  if (train_windows.horizon() != spec.denoiser.horizon) throw std::invalid_argument("window horizon does not match model");

  Rng init_rng = Rng::derive(cfg.seed, 0);
  TrainOutcome out{Model::initialize(spec, init_rng), {}, 0, std::numeric_limits<double>::quiet_NaN(), false, {}};
  Model& model = out.model;
  auto& params = model.params();
  Rng rng = Rng::derive(cfg.seed, 1);
  Adam adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  std::vector<std::vector<float>> best;
  std::size_t stale = 0;
  std::vector<std::size_t> indices(cfg.batch);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (auto& i : indices) i = rng.index(train_windows.size());
    auto contexts = train_windows.contexts<float>(indices);
    auto batch = diffusion::draw_noised_batch(train_windows.targets<float>(indices), model.schedule(), rng);

    params.zero_grad();
    double loss_value = std::numeric_limits<double>::quiet_NaN();
    try {
      auto loss = model.loss(batch, contexts);
      loss_value = loss.item();
      loss.backward();
    } catch (const numerics::NumericError& e) {
      throw TrainingDiverged(describe(step, loss_value, params.grad_norm(), e.what()));
    }
    const double grad_norm = clip_grad_norm(params, cfg.clip_norm);
    if (!std::isfinite(loss_value) || !std::isfinite(grad_norm))
      throw TrainingDiverged(describe(step, loss_value, grad_norm, "non-finite loss or gradient"));
    adam.step(params);

    TrainLogEntry entry{step, loss_value, grad_norm};
    const bool evaluate = val_windows && (step % cfg.eval_every == 0 || step == cfg.steps);
    if (evaluate) {
      entry.val_loss = validation_loss(model, *val_windows, cfg.val_windows, cfg.seed);
      if (!(entry.val_loss >= out.best_val_loss)) {  // also true while best is NaN
        out.best_val_loss = entry.val_loss;
        out.best_step = step;
        best = params.snapshot();
        stale = 0;
      } else {
        ++stale;
      }
    }
    out.log.push_back(entry);
    if (evaluate && stale >= cfg.patience) {
      out.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) {
    params.restore(best);
  } else {
    out.best_step = out.log.size();
  }
  params.zero_grad();
  out.rng_state = rng.state();
  return out;
}

std::string format_train_log(const std::vector<TrainLogEntry>& log) {
  std::string out = "step,loss,grad_norm,val_loss\n";
  for (const auto& e : log) {
    out += std::to_string(e.step) + "," + data::format_number(e.loss) + "," + data::format_number(e.grad_norm) + "," +
           (std::isnan(e.val_loss) ? std::string() : data::format_number(e.val_loss)) + "\n";
  }
  return out;
}

}  // namespace dyndiff::forecasting
