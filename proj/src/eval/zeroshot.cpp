// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>

#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "forge/text_util.hpp"
#include "forge/trainer.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "evaluator";
constexpr double kZeroNorm = 1e-12;

}  // namespace

ZeroShotHead build_zeroshot_head(std::span<const std::string> class_names, std::span<const std::string> templates,
                                 const TextEncoder& text_encoder) {
  if (class_names.empty()) throw Error(kModule, "build_zeroshot_head", "no classes");
  if (templates.empty()) throw Error(kModule, "build_zeroshot_head", "no templates");
  for (const auto& t : templates) {
    if (t.find(kClassPlaceholder) == std::string::npos) {
      throw Error(kModule, "build_zeroshot_head", "template has no class placeholder: '" + t + "'");
    }
  }

  ZeroShotHead head;
  head.class_names.assign(class_names.begin(), class_names.end());
  head.templates_used.assign(templates.begin(), templates.end());
  head.weights.resize(static_cast<Eigen::Index>(class_names.size()), text_encoder.output_dim());

  for (std::size_t c = 0; c < class_names.size(); ++c) {
    // Identical prompts are embedded once and weighted by multiplicity
    // relative to the most frequent prompt, so repeating every template k
    // times reproduces the single-copy head bit for bit.
    std::map<std::string, std::size_t> multiplicity;
    for (const auto& t : templates) ++multiplicity[fill_placeholder(t, class_names[c])];
    std::size_t max_count = 0;
    std::vector<std::string> prompts;
    for (const auto& [prompt, count] : multiplicity) {
      prompts.push_back(prompt);
      max_count = std::max(max_count, count);
    }
    const Eigen::MatrixXd raw = text_encoder.forward(prompts);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(raw.cols());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const double n = raw.row(static_cast<Eigen::Index>(i)).norm();
      if (!(n > kZeroNorm)) {
        throw Error(kModule, "build_zeroshot_head", "prompt '" + prompts[i] + "' has a zero-norm embedding");
      }
      const double w = static_cast<double>(multiplicity[prompts[i]]) / static_cast<double>(max_count);
      mean += w * (raw.row(static_cast<Eigen::Index>(i)) / n);
    }
    const double norm = mean.norm();
    if (!(norm > kZeroNorm)) {
      throw Error(kModule, "build_zeroshot_head",
                  "class '" + class_names[c] + "': template embeddings cancel to a zero-norm mean");
    }
    head.weights.row(static_cast<Eigen::Index>(c)) = mean / norm;
  }
  return head;
}

Eigen::MatrixXd embed_images(const EncoderPair& encoders, const Eigen::MatrixXd& image_features) {
  return l2_normalize_rows(encoders.vision().forward(image_features));
}

ZeroShotPrediction zeroshot_predict(const Eigen::MatrixXd& image_embeddings, const ZeroShotHead& head) {
  if (image_embeddings.cols() != head.weights.cols()) {
    throw Error(kModule, "zeroshot_predict",
                "dimension mismatch: images have " + std::to_string(image_embeddings.cols()) + ", head has " +
                    std::to_string(head.weights.cols()));
  }
  ZeroShotPrediction out;
  out.scores = image_embeddings * head.weights.transpose();
  out.predictions.resize(static_cast<std::size_t>(out.scores.rows()));
  for (Eigen::Index i = 0; i < out.scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < out.scores.cols(); ++c) {
      if (out.scores(i, c) > out.scores(i, best)) best = c;
    }
    out.predictions[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace forge
