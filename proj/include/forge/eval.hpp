// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Zero-shot classification with template ensembling, ACC/AUC metrics, linear
// probing on frozen image embeddings, the dataset registry and per-modality
// reporting.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forge/encoders.hpp"
#include "forge/features.hpp"
#include "forge/manifest.hpp"

namespace forge {

/// Marks where the class name goes in a prompt template.
inline constexpr std::string_view kClassPlaceholder = "{}";

struct ZeroShotHead {
  std::vector<std::string> class_names;
  Eigen::MatrixXd weights;  // one unit-norm row per class
  std::vector<std::string> templates_used;
};

/// Per class: embed each filled template, normalize, average, re-normalize.
ZeroShotHead build_zeroshot_head(std::span<const std::string> class_names, std::span<const std::string> templates,
                                 const TextEncoder& text_encoder);

struct ZeroShotPrediction {
  std::vector<int> predictions;  // argmax, lowest index on ties
  Eigen::MatrixXd scores;        // cosine similarities, images x classes
};

/// Unit-normalized image embeddings from the frozen vision encoder.
Eigen::MatrixXd embed_images(const EncoderPair& encoders, const Eigen::MatrixXd& image_features);

ZeroShotPrediction zeroshot_predict(const Eigen::MatrixXd& image_embeddings, const ZeroShotHead& head);

enum class Metric { ACC, AUC };

std::string_view to_string(Metric metric) noexcept;
std::optional<Metric> parse_metric(std::string_view text);

/// Percentage of matching entries.
double compute_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Tie-aware Mann-Whitney AUC in percent. Labels must be 0/1 with both present.
double compute_auc(std::span<const double> scores, std::span<const int> labels);

struct EvalResult {
  std::string dataset;
  ModalityTag modality = ModalityTag::OTHER;
  Metric metric = Metric::ACC;
  double value = 0.0;  // percent
  std::size_t n = 0;
  std::string protocol = "zeroshot";  // or "linear_probe"
  std::optional<double> fraction;     // linear probe only

  nlohmann::ordered_json to_json() const;
};

/// Metric value from class scores: accuracy of the argmax, or for AUC the
/// positive-minus-negative score margin (binary only).
double score_metric(Metric metric, const Eigen::MatrixXd& scores, std::span<const int> labels);

/// Indices of a class-stratified sample holding max(1, round(fraction * n_c))
/// items per class, in ascending order. Fraction 1 keeps everything.
std::vector<std::size_t> stratified_subsample(std::span<const int> labels, int classes, double fraction,
                                              std::uint64_t seed);

struct ProbeOptions {
  double l2 = 1e-4;
  int max_iterations = 1000;
  double tolerance = 1e-6;  // gradient norm
};

struct LinearClassifier {
  Eigen::MatrixXd weights;  // classes x dim
  Eigen::VectorXd bias;
  int iterations = 0;
  bool converged = false;

  Eigen::MatrixXd scores(const Eigen::MatrixXd& features) const;
};

/// Multinomial logistic regression with an L2 penalty on the weights,
/// gradient descent with backtracking line search.
LinearClassifier fit_logistic_regression(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                         const ProbeOptions& options = {});

struct ProbeTask {
  std::string dataset;
  ModalityTag modality = ModalityTag::OTHER;
  Metric metric = Metric::ACC;
  int classes = 2;
  Eigen::MatrixXd train_features;
  std::vector<int> train_labels;
  Eigen::MatrixXd test_features;
  std::vector<int> test_labels;
};

EvalResult linear_probe(const ProbeTask& task, double fraction, std::uint64_t seed, const ProbeOptions& options = {});

struct ModalityReport {
  std::map<ModalityTag, double> modality_mean;
  std::map<ModalityTag, std::size_t> modality_datasets;
  std::optional<double> grand_mean;  // unweighted over results
  std::vector<EvalResult> results;

  nlohmann::ordered_json to_json() const;
  std::string to_markdown() const;
};

ModalityReport modality_report(std::span<const EvalResult> results);

struct DatasetEntry {
  std::string name;
  ModalityTag modality = ModalityTag::OTHER;
  Metric metric = Metric::ACC;
  std::vector<std::string> classes;
  std::filesystem::path test_split;
  std::optional<std::filesystem::path> train_split;
  std::vector<std::string> templates;  // default_templates() when omitted
};

/// "A medical <modality> image showing {}." style phrasing.
std::vector<std::string> default_templates(ModalityTag modality);

/// JSON array of dataset entries; split paths resolve against the registry's
/// directory.
std::vector<DatasetEntry> load_registry(const std::filesystem::path& path);

struct LabeledSplit {
  std::vector<std::string> image_uris;
  std::vector<int> labels;  // index into the dataset's classes
};

/// CSV with image_uri,label columns; labels match class names case-insensitively.
LabeledSplit load_split(const std::filesystem::path& path, std::span<const std::string> classes);

struct EvalOptions {
  std::optional<std::size_t> template_count;  // first k templates; all when unset
  std::vector<double> probe_fractions;        // empty skips probing
  std::uint64_t seed = 0;
  ProbeOptions probe;
};

/// Zero-shot result first, then one probe result per fraction when the
/// dataset has a training split.
std::vector<EvalResult> evaluate_dataset(const DatasetEntry& entry, const EncoderPair& encoders,
                                         FeatureStore& features, const EvalOptions& options = {});

}  // namespace forge
