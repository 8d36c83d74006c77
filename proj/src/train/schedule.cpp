// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/trainer.hpp"

namespace forge {

void TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("trainer", "TrainingConfig", msg); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (warmup_iters < 0) fail("warmup_iters must be >= 0");
  if (epochs < 1 && max_steps <= 0) fail("epochs must be >= 1 unless max_steps is set");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (!(temperature_init > 0.0) || !std::isfinite(temperature_init)) fail("temperature_init must be > 0");
  if (embed_dim < 2) fail("embed_dim must be >= 2");
  if (text_buckets < 1) fail("text_buckets must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
}

nlohmann::ordered_json TrainingConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"warmup_iters", warmup_iters},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"temperature_init", temperature_init},
          {"temperature_learnable", temperature_learnable},
          {"seed", seed},
          {"source_exclusions", source_exclusions},
          {"embed_dim", embed_dim},
          {"text_buckets", text_buckets},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon}};
}

std::string TrainingConfig::hash() const { return sha256_hex(to_json().dump()); }

double lr_at_step(std::int64_t step, const TrainingConfig& config, std::int64_t total_steps) {
  if (total_steps < config.warmup_iters) {
    throw Error("trainer", "lr_at_step",
                "total_steps (" + std::to_string(total_steps) + ") < warmup_iters (" +
                    std::to_string(config.warmup_iters) + ")");
  }
  if (step < 0 || step > total_steps) {
    throw Error("trainer", "lr_at_step", "step " + std::to_string(step) + " outside [0, total_steps]");
  }
  if (step < config.warmup_iters) {
    return config.learning_rate * static_cast<double>(step) / static_cast<double>(config.warmup_iters);
  }
  const auto decay_steps = total_steps - config.warmup_iters;
  if (decay_steps == 0) return config.learning_rate;
  const double progress = static_cast<double>(step - config.warmup_iters) / static_cast<double>(decay_steps);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace forge
