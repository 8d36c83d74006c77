// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Dual-encoder contrastive training: row normalization, the symmetric
// image/text InfoNCE objective, caption sampling, the learning-rate schedule,
// checkpoints and the training loop.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forge/encoders.hpp"
#include "forge/features.hpp"
#include "forge/manifest.hpp"

namespace forge {

using Rng = std::mt19937_64;

/// Image (V) and text (T) embeddings; row i of each forms a positive pair.
struct EmbeddingBatch {
  Eigen::MatrixXd image;
  Eigen::MatrixXd text;

  Eigen::Index size() const { return image.rows(); }
};

/// Divides each row by its L2 norm. Throws naming the first zero-norm row.
Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& raw);

/// Pulls a gradient w.r.t. normalized rows back to the raw rows.
Eigen::MatrixXd l2_normalize_rows_backward(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& grad_normalized);

/// Runs both encoders and unit-normalizes their outputs.
EmbeddingBatch embed_and_normalize(const Eigen::MatrixXd& image_features, std::span<const std::string> captions,
                                   const EncoderPair& encoders);

struct ContrastiveLoss {
  double loss = 0.0;  // image_to_text + text_to_image
  double image_to_text = 0.0;
  double text_to_image = 0.0;
  Eigen::MatrixXd similarity;  // S(i, j) = v_i . t_j
};

struct ContrastiveGradients {
  Eigen::MatrixXd image;
  Eigen::MatrixXd text;
  double log_temperature = 0.0;
};

/// Each direction is -(1/2N) sum_i log softmax(S / tau) at the diagonal, rows
/// for image-to-text and columns for text-to-image. Requires unit rows
/// (within 1e-6) and tau > 0.
ContrastiveLoss contrastive_loss(const EmbeddingBatch& batch, double temperature);

/// Unchecked loss and analytic gradients, treating V and T as free matrices.
ContrastiveLoss contrastive_objective(const Eigen::MatrixXd& image, const Eigen::MatrixXd& text,
                                      double log_temperature, ContrastiveGradients* gradients = nullptr);

/// Inline captions pass through without touching `rng`; bank references draw
/// uniformly from their entry.
std::string sample_caption(const SampleRecord& record, const CaptionBank* bank, Rng& rng);

struct TrainingConfig {
  int batch_size = 128;
  double learning_rate = 5e-5;
  std::int64_t warmup_iters = 2000;
  int epochs = 10;
  std::int64_t max_steps = 0;  // 0 runs `epochs` full passes
  double temperature_init = 0.07;
  bool temperature_learnable = true;
  std::uint64_t seed = 0;
  std::vector<std::string> source_exclusions;
  int embed_dim = 32;
  int text_buckets = 1024;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-6;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// sha256 of the canonical JSON form.
  std::string hash() const;
};

inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 100.0;

/// Linear warmup to learning_rate over warmup_iters, then cosine decay to 0
/// at total_steps.
double lr_at_step(std::int64_t step, const TrainingConfig& config, std::int64_t total_steps);

/// Everything needed to continue a run.
struct TrainerState {
  EncoderPair encoders;
  double log_temperature = 0.0;
  std::vector<double> adam_m;  // vision params, text params, log temperature
  std::vector<double> adam_v;
  std::int64_t step = 0;  // completed optimizer steps
  std::string config_hash;
  std::string rng_state;  // caption sampler state after `step`

  bool operator==(const TrainerState& other) const;
};

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
/// Throws IntegrityError on truncation, bad magic or checksum mismatch.
TrainerState load_checkpoint(const std::filesystem::path& path);

struct StepMetrics {
  std::int64_t step = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  double temperature = 0.0;
};

std::string metrics_jsonl(std::span<const StepMetrics> metrics);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints
  std::int64_t checkpoint_interval = 0;  // 0 writes only the final checkpoint
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  TrainerState state;
  std::vector<StepMetrics> metrics;  // steps run by this call
  std::int64_t total_steps = 0;
  std::vector<std::filesystem::path> checkpoints;
};

/// Number of records per batch and optimizer steps per epoch for `n` records.
struct BatchPlan {
  std::int64_t batch = 0;
  std::int64_t steps_per_epoch = 0;
  std::int64_t total_steps = 0;
};

BatchPlan plan_batches(std::size_t records, const TrainingConfig& config);

/// Removes records whose source_dataset is excluded; throws when none remain.
std::vector<SampleRecord> apply_source_exclusions(const DatasetManifest& manifest,
                                                  std::span<const std::string> exclusions);

/// Trains `encoders` on the manifest. Images are looked up in `features` by
/// image_uri. Bit-reproducible for a fixed config and inputs.
TrainResult train_loop(const DatasetManifest& manifest, const CaptionBank* bank, FeatureStore& features,
                       EncoderPair encoders, const TrainingConfig& config, const TrainOptions& options = {});

}  // namespace forge
