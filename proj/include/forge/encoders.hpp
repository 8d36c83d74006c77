// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Pluggable image and text encoders. Any backend that can run a forward pass,
// accumulate parameter gradients and expose a flat parameter vector can be
// trained by the contrastive loop; two dependency-free reference encoders are
// provided.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace forge {

class VisionEncoder {
 public:
  virtual ~VisionEncoder() = default;

  virtual std::unique_ptr<VisionEncoder> clone() const = 0;
  virtual Eigen::Index output_dim() const = 0;

  /// N x input features -> N x d raw (unnormalized) embeddings.
  virtual Eigen::MatrixXd forward(const Eigen::MatrixXd& features) const = 0;
  /// Adds dLoss/dparams into `grad` given dLoss/d(raw embeddings).
  virtual void backward(const Eigen::MatrixXd& features, const Eigen::MatrixXd& grad_out,
                        std::span<double> grad) const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  /// Architecture description sufficient to rebuild the encoder.
  virtual nlohmann::ordered_json describe() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual std::unique_ptr<TextEncoder> clone() const = 0;
  virtual Eigen::Index output_dim() const = 0;

  virtual Eigen::MatrixXd forward(std::span<const std::string> captions) const = 0;
  virtual void backward(std::span<const std::string> captions, const Eigen::MatrixXd& grad_out,
                        std::span<double> grad) const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual nlohmann::ordered_json describe() const = 0;
};

/// f_vision and f_text sharing the embedding dimension d >= 2.
class EncoderPair {
 public:
  EncoderPair(std::unique_ptr<VisionEncoder> vision, std::unique_ptr<TextEncoder> text);
  EncoderPair(const EncoderPair& other);
  EncoderPair& operator=(const EncoderPair& other);
  EncoderPair(EncoderPair&&) noexcept = default;
  EncoderPair& operator=(EncoderPair&&) noexcept = default;

  VisionEncoder& vision() { return *vision_; }
  const VisionEncoder& vision() const { return *vision_; }
  TextEncoder& text() { return *text_; }
  const TextEncoder& text() const { return *text_; }
  Eigen::Index dim() const { return vision_->output_dim(); }

  nlohmann::ordered_json describe() const;

 private:
  std::unique_ptr<VisionEncoder> vision_;
  std::unique_ptr<TextEncoder> text_;
};

/// Lowercased alphanumeric tokens (bytes >= 0x80 count as word characters).
std::vector<std::string> tokenize(std::string_view text);

/// L2-normalized hashed bag of words as (bucket, weight) pairs sorted by
/// bucket. Empty when the text has no tokens.
std::vector<std::pair<Eigen::Index, double>> hashed_bag_of_words(std::string_view text, Eigen::Index buckets);

/// Affine map over a fixed-size feature vector.
class AffineVisionEncoder : public VisionEncoder {
 public:
  AffineVisionEncoder(Eigen::Index input_dim, Eigen::Index output_dim, std::uint64_t seed);

  std::unique_ptr<VisionEncoder> clone() const override { return std::make_unique<AffineVisionEncoder>(*this); }
  Eigen::Index output_dim() const override { return out_; }
  Eigen::Index input_dim() const { return in_; }
  Eigen::MatrixXd forward(const Eigen::MatrixXd& features) const override;
  void backward(const Eigen::MatrixXd& features, const Eigen::MatrixXd& grad_out, std::span<double> grad) const override;
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  nlohmann::ordered_json describe() const override;

 private:
  Eigen::Index in_;
  Eigen::Index out_;
  std::vector<double> params_;  // row-major out x in weights, then out biases
};

/// Affine map over a hashed bag-of-words vector of the caption.
class HashedBowTextEncoder : public TextEncoder {
 public:
  HashedBowTextEncoder(Eigen::Index buckets, Eigen::Index output_dim, std::uint64_t seed);

  std::unique_ptr<TextEncoder> clone() const override { return std::make_unique<HashedBowTextEncoder>(*this); }
  Eigen::Index output_dim() const override { return out_; }
  Eigen::Index buckets() const { return buckets_; }
  Eigen::MatrixXd forward(std::span<const std::string> captions) const override;
  void backward(std::span<const std::string> captions, const Eigen::MatrixXd& grad_out,
                std::span<double> grad) const override;
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  nlohmann::ordered_json describe() const override;

 private:
  Eigen::Index buckets_;
  Eigen::Index out_;
  std::vector<double> params_;  // row-major out x buckets weights, then out biases
};

/// Reference pair: affine image encoder and hashed bag-of-words text encoder.
EncoderPair make_reference_encoders(Eigen::Index feature_dim, Eigen::Index embed_dim, Eigen::Index text_buckets,
                                    std::uint64_t seed);

/// Rebuilds an encoder pair (with freshly initialized parameters) from a
/// describe() document; throws for unknown kinds.
EncoderPair make_encoders(const nlohmann::json& description, std::uint64_t seed = 0);

}  // namespace forge
