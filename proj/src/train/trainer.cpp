// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/trainer.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "trainer";

// Stream identifiers for derive_seed.
constexpr std::uint64_t kShuffleStream = 0xB1;
constexpr std::uint64_t kCaptionStream = 0xCA;

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_string(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw IntegrityError(kModule, "train_loop", "checkpoint rng state is unreadable");
  return rng;
}

std::filesystem::path step_checkpoint(const std::filesystem::path& dir, std::int64_t step) {
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint-%08lld.bin", static_cast<long long>(step));
  return dir / name;
}

// Adam over the concatenation of all trainable parameters.
class Adam {
 public:
  Adam(const TrainingConfig& config, std::vector<double>& m, std::vector<double>& v)
      : b1_(config.adam_beta1), b2_(config.adam_beta2), eps_(config.adam_epsilon), m_(m), v_(v) {}

  // Updates params[i] with grad[i] using moment slots offset..offset+n.
  void update(std::span<double> params, std::span<const double> grad, std::size_t offset, double lr,
              std::int64_t step) {
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& m = m_[offset + i];
      double& v = v_[offset + i];
      m = b1_ * m + (1.0 - b1_) * grad[i];
      v = b2_ * v + (1.0 - b2_) * grad[i] * grad[i];
      params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + eps_);
    }
  }

 private:
  double b1_, b2_, eps_;
  std::vector<double>& m_;
  std::vector<double>& v_;
};

}  // namespace

BatchPlan plan_batches(std::size_t records, const TrainingConfig& config) {
  if (records == 0) throw Error(kModule, "plan_batches", "no records to batch");
  BatchPlan plan;
  plan.batch = std::min<std::int64_t>(config.batch_size, static_cast<std::int64_t>(records));
  plan.steps_per_epoch = static_cast<std::int64_t>(records) / plan.batch;  // last partial batch dropped
  plan.total_steps = config.max_steps > 0 ? config.max_steps : plan.steps_per_epoch * config.epochs;
  return plan;
}

std::vector<SampleRecord> apply_source_exclusions(const DatasetManifest& manifest,
                                                  std::span<const std::string> exclusions) {
  std::unordered_set<std::string> excluded(exclusions.begin(), exclusions.end());
  std::vector<SampleRecord> kept;
  for (const auto& r : manifest.records()) {
    if (!excluded.count(r.source_dataset)) kept.push_back(r);
  }
  if (kept.empty()) throw Error(kModule, "train_loop", "empty post-exclusion manifest");
  return kept;
}

std::string metrics_jsonl(std::span<const StepMetrics> metrics) {
  std::string out;
  for (const auto& m : metrics) {
    nlohmann::ordered_json line = {{"step", m.step}, {"lr", m.lr}, {"loss", m.loss}, {"temperature", m.temperature}};
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

TrainResult train_loop(const DatasetManifest& manifest, const CaptionBank* bank, FeatureStore& features,
                       EncoderPair encoders, const TrainingConfig& config, const TrainOptions& options) {
  config.validate();
  const auto records = apply_source_exclusions(manifest, config.source_exclusions);
  const auto plan = plan_batches(records.size(), config);
  lr_at_step(0, config, plan.total_steps);  // rejects total_steps < warmup_iters up front

  for (const auto& r : records) {
    if (const auto* ref = std::get_if<BankRef>(&r.payload); ref && !(bank && bank->find(ref->triplet_key))) {
      throw Error(kModule, "train_loop",
                  "record '" + r.record_id + "': unresolvable triplet key '" + ref->triplet_key + "'");
    }
  }

  std::vector<std::string> uris;
  uris.reserve(records.size());
  for (const auto& r : records) uris.push_back(r.image_uri);
  const Eigen::MatrixXd all_features = features.gather(uris);
  if (!all_features.allFinite()) throw Error(kModule, "train_loop", "image features contain non-finite values");

  const auto hash = config.hash();
  const double min_log_tau = std::log(kMinTemperature);
  const double max_log_tau = std::log(kMaxTemperature);

  TrainResult result{TrainerState{std::move(encoders), 0.0, {}, {}, 0, hash, {}}, {}, plan.total_steps, {}};
  TrainerState& state = result.state;
  Rng caption_rng;
  if (options.resume_from) {
    state = load_checkpoint(*options.resume_from);
    if (state.config_hash != hash) {
      throw Error(kModule, "train_loop", "checkpoint was written by a different training config");
    }
    if (state.step > plan.total_steps) throw Error(kModule, "train_loop", "checkpoint is past the final step");
    caption_rng = rng_from_string(state.rng_state);
  } else {
    state.log_temperature = std::clamp(std::log(config.temperature_init), min_log_tau, max_log_tau);
  }
  if (!options.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.checkpoint_dir, ec);
    if (ec) throw Error(kModule, "train_loop", "cannot create " + options.checkpoint_dir.string() + ": " + ec.message());
  }
  auto& vision = state.encoders.vision();
  auto& text = state.encoders.text();
  const std::size_t n_vision = vision.parameters().size();
  const std::size_t n_text = text.parameters().size();
  const std::size_t n_params = n_vision + n_text + 1;
  if (!options.resume_from) {
    state.adam_m.assign(n_params, 0.0);
    state.adam_v.assign(n_params, 0.0);
  } else if (state.adam_m.size() != n_params || state.adam_v.size() != n_params) {
    throw IntegrityError(kModule, "train_loop", "checkpoint optimizer state does not match the encoders");
  }

  Adam adam(config, state.adam_m, state.adam_v);
  std::vector<double> grad_vision(n_vision), grad_text(n_text);
  std::vector<std::size_t> order(records.size());
  std::int64_t shuffled_epoch = -1;
  const auto batch = static_cast<std::size_t>(plan.batch);
  std::vector<std::string> captions(batch);
  Eigen::MatrixXd batch_features(plan.batch, all_features.cols());

  for (std::int64_t step = state.step + 1; step <= plan.total_steps; ++step) {
    const std::int64_t epoch = (step - 1) / plan.steps_per_epoch;
    const std::int64_t slot = (step - 1) % plan.steps_per_epoch;
    if (epoch != shuffled_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      shuffled_epoch = epoch;
    }
    if (slot == 0) caption_rng.seed(derive_seed(config.seed, kCaptionStream, static_cast<std::uint64_t>(epoch)));

    for (std::size_t i = 0; i < batch; ++i) {
      const auto idx = order[static_cast<std::size_t>(slot) * batch + i];
      batch_features.row(static_cast<Eigen::Index>(i)) = all_features.row(static_cast<Eigen::Index>(idx));
      captions[i] = sample_caption(records[idx], bank, caption_rng);
    }

    const Eigen::MatrixXd raw_image = vision.forward(batch_features);
    const Eigen::MatrixXd raw_text = text.forward(captions);
    ContrastiveGradients grads;
    Eigen::MatrixXd image_unit, text_unit;
    try {
      image_unit = l2_normalize_rows(raw_image);
      text_unit = l2_normalize_rows(raw_text);
    } catch (const Error& e) {
      throw Error(kModule, "train_loop", "step " + std::to_string(step) + ": " + e.what());
    }
    const auto objective = contrastive_objective(image_unit, text_unit, state.log_temperature, &grads);
    if (!std::isfinite(objective.loss)) {
      throw Error(kModule, "train_loop", "NaN loss at step " + std::to_string(step));
    }

    std::fill(grad_vision.begin(), grad_vision.end(), 0.0);
    std::fill(grad_text.begin(), grad_text.end(), 0.0);
    vision.backward(batch_features, l2_normalize_rows_backward(raw_image, grads.image), grad_vision);
    text.backward(captions, l2_normalize_rows_backward(raw_text, grads.text), grad_text);

    const double lr = lr_at_step(step, config, plan.total_steps);
    const double temperature = std::clamp(std::exp(state.log_temperature), kMinTemperature, kMaxTemperature);
    adam.update(vision.parameters(), grad_vision, 0, lr, step);
    adam.update(text.parameters(), grad_text, n_vision, lr, step);
    if (config.temperature_learnable) {
      double log_tau[1] = {state.log_temperature};
      const double g[1] = {grads.log_temperature};
      adam.update(log_tau, g, n_vision + n_text, lr, step);
      state.log_temperature = std::clamp(log_tau[0], min_log_tau, max_log_tau);
    }
    state.step = step;

    const StepMetrics metrics{step, lr, objective.loss, temperature};
    result.metrics.push_back(metrics);
    if (options.on_step) options.on_step(metrics);

    if (!options.checkpoint_dir.empty() && options.checkpoint_interval > 0 &&
        step % options.checkpoint_interval == 0) {
      state.rng_state = rng_to_string(caption_rng);
      const auto path = step_checkpoint(options.checkpoint_dir, step);
      save_checkpoint(state, path);
      result.checkpoints.push_back(path);
    }
  }

  state.rng_state = rng_to_string(caption_rng);
  if (!options.checkpoint_dir.empty()) {
    const auto path = options.checkpoint_dir / "checkpoint-final.bin";
    save_checkpoint(state, path);
    result.checkpoints.push_back(path);
  }
  return result;
}

}  // namespace forge
