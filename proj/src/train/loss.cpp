// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "forge/error.hpp"
#include "forge/trainer.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "trainer";
constexpr double kUnitTolerance = 1e-6;

// Stable log-sum-exp of a vector expression.
template <typename V>
double log_sum_exp(const V& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

// -log softmax(x)[k]. When x[k] is the maximum this is log1p of the other
// terms, which keeps tiny losses from rounding to zero.
template <typename V>
double neg_log_softmax_at(const V& x, Eigen::Index k) {
  const double m = x.maxCoeff();
  double rest = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (j != k) rest += std::exp(x[j] - m);
  }
  if (x[k] == m) return std::log1p(rest);
  return (m - x[k]) + std::log(rest + std::exp(x[k] - m));
}

void require_unit_rows(const Eigen::MatrixXd& m, const char* which) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
      throw Error(kModule, "contrastive_loss",
                  std::string(which) + " row " + std::to_string(i) + " is not unit norm (" + std::to_string(n) + ")");
    }
  }
}

}  // namespace

Eigen::MatrixXd l2_normalize_rows(const Eigen::MatrixXd& raw) {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(kModule, "embed_and_normalize", "raw embedding at batch index " + std::to_string(i) +
                                                      (n == 0.0 ? " has zero norm" : " is not finite"));
    }
    out.row(i) = raw.row(i) / n;
  }
  return out;
}

Eigen::MatrixXd l2_normalize_rows_backward(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& grad_normalized) {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    const Eigen::RowVectorXd u = raw.row(i) / n;
    const auto g = grad_normalized.row(i);
    out.row(i) = (g - u * u.dot(g)) / n;
  }
  return out;
}

EmbeddingBatch embed_and_normalize(const Eigen::MatrixXd& image_features, std::span<const std::string> captions,
                                   const EncoderPair& encoders) {
  if (image_features.rows() == 0 || captions.empty()) throw Error(kModule, "embed_and_normalize", "empty batch");
  if (image_features.rows() != static_cast<Eigen::Index>(captions.size())) {
    throw Error(kModule, "embed_and_normalize", "image and caption counts differ");
  }
  return EmbeddingBatch{l2_normalize_rows(encoders.vision().forward(image_features)),
                        l2_normalize_rows(encoders.text().forward(captions))};
}

ContrastiveLoss contrastive_objective(const Eigen::MatrixXd& image, const Eigen::MatrixXd& text,
                                      double log_temperature, ContrastiveGradients* gradients) {
  const Eigen::Index n = image.rows();
  const double tau = std::exp(log_temperature);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));

  ContrastiveLoss out;
  out.similarity = image * text.transpose();
  const Eigen::MatrixXd logits = out.similarity / tau;

  Eigen::VectorXd row_lse(n), col_lse(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    row_lse[i] = log_sum_exp(logits.row(i));
    col_lse[i] = log_sum_exp(logits.col(i));
  }
  double i2t = 0.0, t2i = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    i2t += neg_log_softmax_at(logits.row(i), i);
    t2i += neg_log_softmax_at(logits.col(i), i);
  }
  // Adding +0.0 turns a -0.0 from the N = 1 case into 0.0.
  out.image_to_text = i2t * scale + 0.0;
  out.text_to_image = t2i * scale + 0.0;
  out.loss = out.image_to_text + out.text_to_image;

  if (gradients) {
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        g(i, j) = std::exp(logits(i, j) - row_lse[i]) + std::exp(logits(i, j) - col_lse[j]);
      }
      g(i, i) -= 2.0;
    }
    g *= scale;  // dLoss/dlogits
    const Eigen::MatrixXd gs = g / tau;
    gradients->image = gs * text;
    gradients->text = gs.transpose() * image;
    gradients->log_temperature = -(g.array() * logits.array()).sum();
  }
  return out;
}

ContrastiveLoss contrastive_loss(const EmbeddingBatch& batch, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(kModule, "contrastive_loss", "temperature must be positive and finite");
  }
  if (batch.image.rows() == 0) throw Error(kModule, "contrastive_loss", "empty batch");
  if (batch.image.rows() != batch.text.rows() || batch.image.cols() != batch.text.cols()) {
    throw Error(kModule, "contrastive_loss", "image and text embedding shapes differ");
  }
  require_unit_rows(batch.image, "image");
  require_unit_rows(batch.text, "text");
  return contrastive_objective(batch.image, batch.text, std::log(temperature));
}

}  // namespace forge
