#include "dyndiff/forecasting/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::forecasting {

void ModelSpec::validate() const {
  encoder.validate();
  denoiser.validate();
  if (encoder.latent_dim != denoiser.d_model) {
    throw std::invalid_argument("encoder latent_dim " + std::to_string(encoder.latent_dim) +
                                " must equal denoiser d_model " + std::to_string(denoiser.d_model));
  }
}

ModelSpec model_spec(const RunConfig& cfg, std::size_t in_vars, std::size_t n_vars) {
  ModelSpec spec;
  spec.encoder = cfg.encoder;
  spec.encoder.in_vars = in_vars;
  spec.denoiser = cfg.denoiser;
  spec.denoiser.n_vars = n_vars;
  spec.denoiser.horizon = cfg.train.horizon;
  spec.schedule = cfg.diffusion;
  spec.unconditional = cfg.train.unconditional;
  spec.validate();
  return spec;
}

Model::Model(ModelSpec spec, ParameterStore<float> params)
    : spec_(std::move(spec)), schedule_(diffusion::NoiseSchedule::from_config(spec_.schedule)), params_(std::move(params)) {
  spec_.validate();
}

Model Model::initialize(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  ParameterStore<float> params;
  encoder::init_encoder(spec.encoder, params, rng);
  denoiser::init_denoiser(spec.denoiser, params, rng);
  if (spec.unconditional) params.add_normal(kBaselineLatent, {spec.denoiser.d_model}, 1.0, rng);
  return Model(spec, std::move(params));
}

std::size_t Model::context_needed() const { return encoder::receptive_field(spec_.encoder); }

Tensor<float> Model::latent(const Tensor<float>& contexts) const {
  if (!spec_.unconditional) return encoder::encode_batch(contexts, spec_.encoder, params_);
  if (contexts.rank() != 3) {
    throw numerics::ShapeError("latent: expected [batch, c, m], got " + numerics::shape_str(contexts.shape()));
  }
  const auto zeros = Tensor<float>::zeros({contexts.dim(0), spec_.denoiser.d_model});
  return numerics::add_broadcast(zeros, params_.at(kBaselineLatent));
}

Tensor<float> Model::predict_noise(const Tensor<float>& xs, const std::vector<int>& steps,
                                   const Tensor<float>& latent) const {
  return denoiser::predict_noise(xs, steps, latent, spec_.denoiser, params_);
}

Tensor<float> Model::loss(const diffusion::NoisedBatch<float>& batch, const Tensor<float>& contexts) const {
  diffusion::NoisePredictor<float> eps_theta = [this](const Tensor<float>& xs, const std::vector<int>& steps,
                                                      const Tensor<float>& latent) {
    return predict_noise(xs, steps, latent);
  };
  return diffusion::training_loss(batch, latent(contexts), eps_theta);
}

const data::VariableStats& TrainedModel::target_stats(std::size_t j) const { return stats.at(target_columns().at(j)); }

std::vector<std::size_t> TrainedModel::target_columns() const {
  std::vector<std::size_t> out;
  for (const auto& t : targets) {
    auto it = std::find(variables.begin(), variables.end(), t);
    if (it == variables.end()) throw std::runtime_error("target '" + t + "' is not an input variable");
    out.push_back(static_cast<std::size_t>(it - variables.begin()));
  }
  return out;
}

data::Checkpoint to_checkpoint(const TrainedModel& trained) {
  data::Checkpoint ckpt;
  for (const auto& [name, t] : trained.model.params())
    ckpt.parameters.push_back({name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  ckpt.config = to_key_values(trained.config);
  ckpt.variables = trained.variables;
  ckpt.targets = trained.targets;
  ckpt.stats = trained.stats;
  ckpt.rng_state = trained.rng_state;
  return ckpt;
}

TrainedModel from_checkpoint(const data::Checkpoint& ckpt) {
  RunConfig cfg;
  apply_key_values(cfg, ckpt.config);
  if (ckpt.variables.empty() || ckpt.targets.empty()) throw std::runtime_error("checkpoint lists no variables or targets");
  if (ckpt.stats.size() != ckpt.variables.size()) throw std::runtime_error("checkpoint stats do not match its variables");
  const auto spec = model_spec(cfg, ckpt.variables.size(), ckpt.targets.size());

  // Shapes come from a freshly initialized model of the same spec.
  Rng scratch(0);
  auto reference = Model::initialize(spec, scratch);
  if (reference.params().size() != ckpt.parameters.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.parameters.size()) + " parameters, model expects " +
                             std::to_string(reference.params().size()));
  }
  ParameterStore<float> params;
  for (const auto& [name, ref] : reference.params()) {
    const data::NamedBuffer* buf = nullptr;
    for (const auto& p : ckpt.parameters)
      if (p.name == name) buf = &p;
    if (!buf) throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
    if (buf->shape != ref.shape()) {
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " + numerics::shape_str(buf->shape) +
                               ", expected " + numerics::shape_str(ref.shape()));
    }
    params.add(name, Tensor<float>::from_data(buf->shape, buf->values));
  }
  TrainedModel out{Model(spec, std::move(params)), cfg, ckpt.variables, ckpt.targets, ckpt.stats, ckpt.rng_state};
  out.target_columns();  // validates target names
  return out;
}

}  // namespace dyndiff::forecasting
