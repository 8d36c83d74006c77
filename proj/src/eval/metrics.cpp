// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forge/error.hpp"
#include "forge/eval.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "evaluator";

}  // namespace

std::string_view to_string(Metric metric) noexcept { return metric == Metric::AUC ? "AUC" : "ACC"; }

std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "ACC" || text == "acc") return Metric::ACC;
  if (text == "AUC" || text == "auc") return Metric::AUC;
  return std::nullopt;
}

double compute_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error(kModule, "compute_accuracy", "length mismatch");
  if (labels.empty()) throw Error(kModule, "compute_accuracy", "empty input");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) matches += predictions[i] == labels[i];
  return 100.0 * static_cast<double>(matches) / static_cast<double>(labels.size());
}

double compute_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(kModule, "compute_auc", "length mismatch");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(kModule, "compute_auc", "labels must be binary (0/1)");
    if (!std::isfinite(scores[i])) throw Error(kModule, "compute_auc", "non-finite score at index " + std::to_string(i));
    positives += labels[i] == 1;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw Error(kModule, "compute_auc", "AUC undefined: only one class present");

  // Mann-Whitney U from average ranks. Ranks are multiples of 0.5, so every
  // intermediate value is exact in double precision.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += rank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return (100.0 * u) / (np * static_cast<double>(negatives));
}

double score_metric(Metric metric, const Eigen::MatrixXd& scores, std::span<const int> labels) {
  if (scores.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error(kModule, "score_metric", "score rows and labels differ in length");
  }
  if (metric == Metric::AUC) {
    if (scores.cols() != 2) throw Error(kModule, "score_metric", "AUC requires exactly two classes");
    std::vector<double> margin(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      margin[i] = scores(r, 1) - scores(r, 0);
    }
    return compute_auc(margin, labels);
  }
  std::vector<int> predictions(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index best = 0;
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    predictions[i] = static_cast<int>(best);
  }
  return compute_accuracy(predictions, labels);
}

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j = {{"dataset", dataset},
                              {"modality", std::string(forge::to_string(modality))},
                              {"metric", std::string(forge::to_string(metric))},
                              {"value", value},
                              {"n", n},
                              {"protocol", protocol}};
  if (fraction) j["fraction"] = *fraction;
  return j;
}

}  // namespace forge
