#include "dyndiff/denoiser/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "dyndiff/numerics/ops.hpp"

namespace dyndiff::denoiser {

namespace ops = dyndiff::numerics;

void DenoiserConfig::validate() const {
  if (n_vars == 0 || horizon == 0 || d_model == 0 || heads == 0 || ff_dim == 0 || kernel == 0) {
    throw std::invalid_argument("denoiser config: n_vars, horizon, d_model, heads, ff_dim and kernel must be >= 1");
  }
  if (d_model % 2 != 0) throw std::invalid_argument("denoiser config: d_model must be even");
  if (d_model % heads != 0) {
    throw std::invalid_argument("denoiser config: d_model " + std::to_string(d_model) +
                                " is not divisible by heads " + std::to_string(heads));
  }
  if (kernel % 2 == 0) throw std::invalid_argument("denoiser config: kernel must be odd");
}

StepEmbedding embed_step(int s, std::size_t d_model) {
  if (s < 0) throw std::invalid_argument("embed_step: step must be >= 0");
  if (d_model == 0 || d_model % 2 != 0) {
    throw std::invalid_argument("embed_step: d_model must be even and positive, got " + std::to_string(d_model));
  }
  StepEmbedding out{s, std::vector<double>(d_model)};
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    out.vec[2 * i] = std::sin(s / freq);
    out.vec[2 * i + 1] = std::cos(s / freq);
  }
  return out;
}

template <typename T>
Tensor<T> embed_steps(const std::vector<int>& steps, std::size_t d_model) {
  std::vector<T> values;
  values.reserve(steps.size() * d_model);
  for (int s : steps) {
    for (double v : embed_step(s, d_model).vec) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from_data({steps.size(), d_model}, std::move(values));
}

namespace {

double fan_in(std::size_t n) { return std::sqrt(1.0 / static_cast<double>(n)); }

template <typename T>
void add_dense(ParameterStore<T>& params, const std::string& name, std::size_t in, std::size_t out, double stddev,
               Rng& rng) {
  params.add_normal(name + ".w", {in, out}, stddev, rng);
  params.add_zeros(name + ".b", {out});
}

template <typename T>
void add_condition(ParameterStore<T>& params, const std::string& group, std::size_t d, Rng& rng) {
  params.add_normal(group + "e.w", {d, d}, fan_in(d), rng);
  params.add_normal(group + "s.w", {d, d}, fan_in(d), rng);
}

template <typename T>
Tensor<T> dense_of(const Tensor<T>& x, const ParameterStore<T>& params, const std::string& name) {
  return ops::dense(x, params.at(name + ".w"), params.at(name + ".b"));
}

}  // namespace

template <typename T>
void init_denoiser(const DenoiserConfig& cfg, ParameterStore<T>& params, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::string& p = kPrefix;
  add_dense(params, p + "in", cfg.n_vars, d, fan_in(cfg.n_vars), rng);
  params.add_normal(p + "pos", {cfg.horizon, d}, 0.1, rng);
  add_condition(params, p + "cond0.", d, rng);

  for (const char* name : {"attn.q", "attn.k", "attn.v", "attn.o"}) add_dense(params, p + name, d, d, fan_in(d), rng);
  params.add_constant(p + "ln1.gamma", {d}, T(1));
  params.add_zeros(p + "ln1.beta", {d});
  add_dense(params, p + "ff1", d, cfg.ff_dim, std::sqrt(2.0 / static_cast<double>(d)), rng);
  add_dense(params, p + "ff2", cfg.ff_dim, d, fan_in(cfg.ff_dim), rng);
  params.add_constant(p + "ln2.gamma", {d}, T(1));
  params.add_zeros(p + "ln2.beta", {d});

  for (std::size_t i = 0; i < cfg.res_blocks; ++i) {
    const std::string block = p + "res" + std::to_string(i) + ".";
    add_condition(params, block + "cond.", d, rng);
    params.add_normal(block + "conv.w", {cfg.kernel, d, d}, std::sqrt(2.0 / static_cast<double>(cfg.kernel * d)),
                      rng);
    params.add_zeros(block + "conv.b", {d});
    // The last block's residual stream would feed nothing, so it has none.
    if (i + 1 < cfg.res_blocks) add_dense(params, block + "residual", d, d, fan_in(d), rng);
    add_dense(params, block + "skip", d, d, fan_in(d), rng);
  }

  add_dense(params, p + "head", d, d, std::sqrt(2.0 / static_cast<double>(d)), rng);
  // Small but nonzero so every upstream weight gets gradient from step one.
  add_dense(params, p + "out", d, cfg.n_vars, 0.1 * fan_in(d), rng);
}

template <typename T>
Tensor<T> condition_inject(const Tensor<T>& h, const Tensor<T>& latent, const Tensor<T>& emb,
                           const ParameterStore<T>& params, const std::string& group) {
  const auto& we = params.at(group + "e.w");
  if (latent.rank() != 2 || latent.dim(1) != we.dim(0)) {
    throw numerics::ShapeError("condition_inject: latent " + numerics::shape_str(latent.shape()) +
                               " does not match conditioning width " + std::to_string(we.dim(0)));
  }
  auto cond = ops::add(ops::dense(latent, we, Tensor<T>{}), ops::dense(emb, params.at(group + "s.w"), Tensor<T>{}));
  return ops::add_over_time(h, cond);
}

template <typename T>
Tensor<T> predict_noise(const Tensor<T>& xs, const std::vector<int>& steps, const Tensor<T>& latent,
                        const DenoiserConfig& cfg, const ParameterStore<T>& params, DenoiserTrace<T>* trace) {
  cfg.validate();
  if (xs.rank() != 3 || xs.dim(1) != cfg.horizon || xs.dim(2) != cfg.n_vars) {
    throw numerics::ShapeError("predict_noise: expected [batch, " + std::to_string(cfg.horizon) + ", " +
                               std::to_string(cfg.n_vars) + "], got " + numerics::shape_str(xs.shape()));
  }
  const std::size_t batch = xs.dim(0);
  if (steps.size() != batch) {
    throw numerics::ShapeError("predict_noise: " + std::to_string(steps.size()) + " steps for batch of " +
                               std::to_string(batch));
  }
  if (latent.rank() != 2 || latent.dim(0) != batch || latent.dim(1) != cfg.d_model) {
    throw numerics::ShapeError("predict_noise: latent " + numerics::shape_str(latent.shape()) +
                               " does not match [" + std::to_string(batch) + ", " + std::to_string(cfg.d_model) +
                               "]");
  }
  const std::string& p = kPrefix;
  const auto emb = embed_steps<T>(steps, cfg.d_model);

  auto h = dense_of(xs, params, p + "in");
  h = ops::add_broadcast(h, params.at(p + "pos"));
  h = condition_inject(h, latent, emb, params, p + "cond0.");

  auto attn = ops::scaled_dot_product_attention(dense_of(h, params, p + "attn.q"), dense_of(h, params, p + "attn.k"),
                                                 dense_of(h, params, p + "attn.v"), cfg.heads);
  if (trace) trace->attention = attn.weights;
  h = ops::layer_norm(ops::add(h, dense_of(attn.output, params, p + "attn.o")), params.at(p + "ln1.gamma"),
                      params.at(p + "ln1.beta"));
  auto ff = dense_of(ops::relu(dense_of(h, params, p + "ff1")), params, p + "ff2");
  h = ops::layer_norm(ops::add(h, ff), params.at(p + "ln2.gamma"), params.at(p + "ln2.beta"));

  const T inv_sqrt2 = static_cast<T>(1.0 / std::sqrt(2.0));
  Tensor<T> skips;
  for (std::size_t i = 0; i < cfg.res_blocks; ++i) {
    const std::string block = p + "res" + std::to_string(i) + ".";
    auto y = condition_inject(h, latent, emb, params, block + "cond.");
    y = ops::conv1d(y, params.at(block + "conv.w"), params.at(block + "conv.b"), std::size_t{1} << i,
                    ops::Padding::same);
    y = ops::silu(y);
    if (i + 1 < cfg.res_blocks) h = ops::scale(ops::add(h, dense_of(y, params, block + "residual")), inv_sqrt2);
    auto skip = dense_of(y, params, block + "skip");
    skips = skips.defined() ? ops::add(skips, skip) : skip;
  }
  if (!skips.defined()) skips = h;

  return dense_of(ops::silu(dense_of(skips, params, p + "head")), params, p + "out");
}

template <typename T>
Tensor<T> predict_noise(const Tensor<T>& xs, int s, const encoder::LatentContext<T>& e, const DenoiserConfig& cfg,
                        const ParameterStore<T>& params) {
  if (xs.rank() != 2) throw numerics::ShapeError("predict_noise: expected [p, n], got " + numerics::shape_str(xs.shape()));
  if (e.e.rank() != 1 || e.e.dim(0) != cfg.d_model) {
    throw numerics::ShapeError("predict_noise: latent of size " + numerics::shape_str(e.e.shape()) +
                               " does not match d_model " + std::to_string(cfg.d_model));
  }
  auto out = predict_noise(ops::reshape(xs, {1, xs.dim(0), xs.dim(1)}), std::vector<int>{s},
                           ops::reshape(e.e, {1, cfg.d_model}), cfg, params);
  return ops::reshape(out, xs.shape());
}

#define DYNDIFF_INSTANTIATE_DENOISER(T)                                                                          \
  template Tensor<T> embed_steps<T>(const std::vector<int>&, std::size_t);                                      \
  template void init_denoiser(const DenoiserConfig&, ParameterStore<T>&, Rng&);                                 \
  template Tensor<T> condition_inject(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                     \
                                      const ParameterStore<T>&, const std::string&);                            \
  template Tensor<T> predict_noise(const Tensor<T>&, const std::vector<int>&, const Tensor<T>&,                 \
                                   const DenoiserConfig&, const ParameterStore<T>&, DenoiserTrace<T>*);         \
  template Tensor<T> predict_noise(const Tensor<T>&, int, const encoder::LatentContext<T>&,                     \
                                   const DenoiserConfig&, const ParameterStore<T>&);

DYNDIFF_INSTANTIATE_DENOISER(float)
DYNDIFF_INSTANTIATE_DENOISER(double)

#undef DYNDIFF_INSTANTIATE_DENOISER

}  // namespace dyndiff::denoiser
