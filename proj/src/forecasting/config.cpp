#include "dyndiff/forecasting/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>

namespace dyndiff::forecasting {

void TrainConfig::validate() const {
  if (batch == 0 || steps == 0 || context == 0 || horizon == 0 || eval_every == 0 || patience == 0 || val_windows == 0)
    throw std::invalid_argument("train config: batch, steps, context, horizon, eval_every, patience and "
                                "val_windows must be >= 1");
  if (!(lr > 0.0) || !(adam_eps > 0.0) || !(clip_norm > 0.0))
    throw std::invalid_argument("train config: lr, adam_eps and clip_norm must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: Adam betas must lie in [0, 1)");
}

RunConfig::RunConfig() { set_d_model(128); }

void RunConfig::set_d_model(std::size_t d) {
  encoder.latent_dim = d;
  denoiser.d_model = d;
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    auto comma = v.find(',', pos);
    if (comma == std::string::npos) comma = v.size();
    std::string item = v.substr(pos, comma - pos);
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    pos = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](const RunConfig& c) { return std::to_string(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_size(k, v); }};
}

template <typename Member>
Field real_field(Member member) {
  return {[member](const RunConfig& c) { return data::format_number(member(c)); },
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_real(k, v); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["data.targets"] = {[](const RunConfig& c) { return join(c.data.targets); },
                         [](RunConfig& c, const std::string&, const std::string& v) { c.data.targets = split_list(v); }};
    t["data.split"] = {
        [](const RunConfig& c) {
          return data::format_number(c.data.split.train) + "," + data::format_number(c.data.split.val) + "," +
                 data::format_number(c.data.split.test);
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          auto parts = split_list(v);
          if (parts.size() != 3) throw std::invalid_argument("config key '" + k + "': expected train,val,test ratios");
          c.data.split = {parse_real(k, parts[0]), parse_real(k, parts[1]), parse_real(k, parts[2])};
        }};
    t["data.stride"] = size_field([](auto& c) -> auto& { return c.data.stride; });
    t["model.d_model"] = {[](const RunConfig& c) { return std::to_string(c.denoiser.d_model); },
                          [](RunConfig& c, const std::string& k, const std::string& v) { c.set_d_model(parse_size(k, v)); }};
    t["encoder.channels"] = size_field([](auto& c) -> auto& { return c.encoder.channels; });
    t["encoder.layers"] = size_field([](auto& c) -> auto& { return c.encoder.layers; });
    t["encoder.kernel"] = size_field([](auto& c) -> auto& { return c.encoder.kernel; });
    t["encoder.dilation_base"] = size_field([](auto& c) -> auto& { return c.encoder.dilation_base; });
    t["encoder.latent_dim"] = {
        [](const RunConfig& c) { return std::to_string(c.encoder.latent_dim); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.set_d_model(parse_size(k, v)); }};
    t["denoiser.heads"] = size_field([](auto& c) -> auto& { return c.denoiser.heads; });
    t["denoiser.res_blocks"] = size_field([](auto& c) -> auto& { return c.denoiser.res_blocks; });
    t["denoiser.ff_dim"] = size_field([](auto& c) -> auto& { return c.denoiser.ff_dim; });
    t["denoiser.kernel"] = size_field([](auto& c) -> auto& { return c.denoiser.kernel; });
    t["diffusion.steps"] = {[](const RunConfig& c) { return std::to_string(c.diffusion.steps); },
                            [](RunConfig& c, const std::string& k, const std::string& v) {
                              c.diffusion.steps = static_cast<int>(parse_size(k, v));
                            }};
    t["diffusion.beta_min"] = real_field([](auto& c) -> auto& { return c.diffusion.beta_min; });
    t["diffusion.beta_max"] = real_field([](auto& c) -> auto& { return c.diffusion.beta_max; });
    t["train.lr"] = real_field([](auto& c) -> auto& { return c.train.lr; });
    t["train.batch"] = size_field([](auto& c) -> auto& { return c.train.batch; });
    t["train.steps"] = size_field([](auto& c) -> auto& { return c.train.steps; });
    t["train.seed"] = {[](const RunConfig& c) { return std::to_string(c.train.seed); },
                       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_size(k, v); }};
    t["train.context"] = size_field([](auto& c) -> auto& { return c.train.context; });
    t["train.horizon"] = size_field([](auto& c) -> auto& { return c.train.horizon; });
    t["train.unconditional"] = {
        [](const RunConfig& c) { return std::string(c.train.unconditional ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.train.unconditional = parse_bool(k, v); }};
    t["train.beta1"] = real_field([](auto& c) -> auto& { return c.train.beta1; });
    t["train.beta2"] = real_field([](auto& c) -> auto& { return c.train.beta2; });
    t["train.adam_eps"] = real_field([](auto& c) -> auto& { return c.train.adam_eps; });
    t["train.clip_norm"] = real_field([](auto& c) -> auto& { return c.train.clip_norm; });
    t["train.eval_every"] = size_field([](auto& c) -> auto& { return c.train.eval_every; });
    t["train.patience"] = size_field([](auto& c) -> auto& { return c.train.patience; });
    t["train.val_windows"] = size_field([](auto& c) -> auto& { return c.train.val_windows; });
    t["forecast.samples"] = size_field([](auto& c) -> auto& { return c.forecast.samples; });
    t["forecast.horizon"] = size_field([](auto& c) -> auto& { return c.forecast.horizon; });
    t["forecast.seed"] = {[](const RunConfig& c) { return std::to_string(c.forecast.seed); },
                          [](RunConfig& c, const std::string& k, const std::string& v) { c.forecast.seed = parse_size(k, v); }};
    t["eval.horizons"] = {[](const RunConfig& c) {
                            std::vector<std::string> s;
                            for (auto h : c.eval.horizons) s.push_back(std::to_string(h));
                            return join(s);
                          },
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                            c.eval.horizons.clear();
                            for (const auto& item : split_list(v)) c.eval.horizons.push_back(parse_size(k, item));
                          }};
    t["eval.windows"] = size_field([](auto& c) -> auto& { return c.eval.windows; });
    t["eval.stride"] = size_field([](auto& c) -> auto& { return c.eval.stride; });
    t["eval.trials"] = size_field([](auto& c) -> auto& { return c.eval.trials; });
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

void apply_key_values(RunConfig& cfg, const data::KeyValues& kv) {
  const auto& table = fields();
  for (const auto& [key, _] : kv) {
    if (!table.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  if (kv.count("model.d_model") && kv.count("encoder.latent_dim") && kv.at("model.d_model") != kv.at("encoder.latent_dim"))
    throw std::invalid_argument("encoder.latent_dim must equal model.d_model");
  for (const auto& [key, value] : kv) table.at(key).set(cfg, key, value);
}

data::KeyValues to_key_values(const RunConfig& cfg) {
  data::KeyValues out;
  for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : data::format_config(to_key_values(cfg))) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dyndiff::forecasting
