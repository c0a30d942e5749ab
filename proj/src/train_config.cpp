#include "spannorm/train_config.hpp"

#include <cmath>
#include <numbers>

#include "spannorm/errors.hpp"

namespace spannorm {

void TrainConfig::validate() const {
  model.validate();
  if (!(peak_lr > 0.0) || !(min_lr > 0.0) || min_lr > peak_lr) {
    throw ConfigError("train: need 0 < min_lr <= peak_lr");
  }
  if (total_steps < 0 || warmup_steps < 0 || warmup_steps > total_steps) {
    throw ConfigError("train: need 0 <= warmup_steps <= total_steps");
  }
  if (batch_tokens < 1) throw ConfigError("train: batch_tokens must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: beta1 and beta2 must lie in (0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (log_every < 1) throw ConfigError("train: log_every must be positive");
  if (trace_every < 0) throw ConfigError("train: trace_every must be non-negative");
}

double lr_at(int step, const TrainConfig& config) {
  if (step < 0 || step > config.total_steps) {
    throw ContractError("lr_at: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(config.total_steps) + "]");
  }
  if (step < config.warmup_steps) {
    return config.peak_lr * static_cast<double>(step) / config.warmup_steps;
  }
  const int decay_steps = config.total_steps - config.warmup_steps;
  if (decay_steps == 0) return config.peak_lr;
  const double progress = static_cast<double>(step - config.warmup_steps) / decay_steps;
  return config.min_lr +
         0.5 * (config.peak_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

Activation parse_activation(const std::string& text) {
  if (text == "gelu") return Activation::Gelu;
  if (text == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + text + "' (gelu, identity)");
}

int as_int(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("config key " + key + ": out of range");
  return static_cast<int>(v);
}

std::uint64_t as_seed(const std::string& key, const std::string& text) {
  const long long v = parse_integer(key, text);
  if (v < 0) throw ConfigError("config key " + key + ": seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig c) {
  for (const auto& [key, value] : kv.entries()) {
    if (key == "model.layers") c.model.layers = as_int(key, value);
    else if (key == "model.width") c.model.width = as_int(key, value);
    else if (key == "model.heads") c.model.heads = as_int(key, value);
    else if (key == "model.ffn") c.model.ffn = as_int(key, value);
    else if (key == "model.vocab") c.model.vocab = as_int(key, value);
    else if (key == "model.seq") c.model.seq = as_int(key, value);
    else if (key == "model.topology") c.model.topology.kind = parse_topology(value);
    else if (key == "model.post_fraction") c.model.topology.post_fraction = parse_double(key, value);
    else if (key == "model.init") c.model.init.kind = parse_init_kind(value);
    else if (key == "model.base_std") c.model.init.base_std = parse_double(key, value);
    else if (key == "model.activation") c.model.activation = parse_activation(value);
    else if (key == "model.ln_eps") c.model.ln_eps = parse_double(key, value);
    else if (key == "model.seed") c.model.seed = as_seed(key, value);
    else if (key == "train.peak_lr") c.peak_lr = parse_double(key, value);
    else if (key == "train.min_lr") c.min_lr = parse_double(key, value);
    else if (key == "train.warmup_steps") c.warmup_steps = as_int(key, value);
    else if (key == "train.total_steps") c.total_steps = as_int(key, value);
    else if (key == "train.batch_tokens") c.batch_tokens = as_int(key, value);
    else if (key == "train.beta1") c.beta1 = parse_double(key, value);
    else if (key == "train.beta2") c.beta2 = parse_double(key, value);
    else if (key == "train.weight_decay") c.weight_decay = parse_double(key, value);
    else if (key == "train.clip_norm") c.clip_norm = parse_double(key, value);
    else if (key == "train.adam_eps") c.adam_eps = parse_double(key, value);
    else if (key == "train.task") c.task.kind = parse_task(value);
    else if (key == "train.modulus") c.task.modulus = as_int(key, value);
    else if (key == "train.data_path") c.task.path = value;
    else if (key == "train.seed") c.seed = as_seed(key, value);
    else if (key == "train.log_every") c.log_every = as_int(key, value);
    else if (key == "train.trace_every") c.trace_every = as_int(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

KeyValueConfig to_key_values(const TrainConfig& c) {
  KeyValueConfig kv;
  kv.set("model.layers", std::to_string(c.model.layers));
  kv.set("model.width", std::to_string(c.model.width));
  kv.set("model.heads", std::to_string(c.model.heads));
  kv.set("model.ffn", std::to_string(c.model.ffn));
  kv.set("model.vocab", std::to_string(c.model.vocab));
  kv.set("model.seq", std::to_string(c.model.seq));
  kv.set("model.topology", to_string(c.model.topology.kind));
  kv.set("model.post_fraction", format_double(c.model.topology.post_fraction));
  kv.set("model.init", to_string(c.model.init.kind));
  kv.set("model.base_std", format_double(c.model.init.base_std));
  kv.set("model.activation", c.model.activation == Activation::Gelu ? "gelu" : "identity");
  kv.set("model.ln_eps", format_double(c.model.ln_eps));
  kv.set("model.seed", std::to_string(c.model.seed));
  kv.set("train.peak_lr", format_double(c.peak_lr));
  kv.set("train.min_lr", format_double(c.min_lr));
  kv.set("train.warmup_steps", std::to_string(c.warmup_steps));
  kv.set("train.total_steps", std::to_string(c.total_steps));
  kv.set("train.batch_tokens", std::to_string(c.batch_tokens));
  kv.set("train.beta1", format_double(c.beta1));
  kv.set("train.beta2", format_double(c.beta2));
  kv.set("train.weight_decay", format_double(c.weight_decay));
  kv.set("train.clip_norm", format_double(c.clip_norm));
  kv.set("train.adam_eps", format_double(c.adam_eps));
  kv.set("train.task", to_string(c.task.kind));
  kv.set("train.modulus", std::to_string(c.task.modulus));
  if (!c.task.path.empty()) kv.set("train.data_path", c.task.path);
  kv.set("train.seed", std::to_string(c.seed));
  kv.set("train.log_every", std::to_string(c.log_every));
  kv.set("train.trace_every", std::to_string(c.trace_every));
  return kv;
}

}  // namespace spannorm
