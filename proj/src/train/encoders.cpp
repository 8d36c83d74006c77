// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>

#include "forge/error.hpp"
#include "forge/hashing.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "trainer";

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> init_affine(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed) {
  std::vector<double> params(static_cast<std::size_t>(rows * cols + rows), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, stddev);
  for (Eigen::Index i = 0; i < rows * cols; ++i) params[static_cast<std::size_t>(i)] = gauss(rng);
  return params;
}

}  // namespace

EncoderPair::EncoderPair(std::unique_ptr<VisionEncoder> vision, std::unique_ptr<TextEncoder> text)
    : vision_(std::move(vision)), text_(std::move(text)) {
  if (!vision_ || !text_) throw Error(kModule, "EncoderPair", "both encoders are required");
  if (vision_->output_dim() != text_->output_dim()) {
    throw Error(kModule, "EncoderPair",
                "embedding dimensions differ: vision " + std::to_string(vision_->output_dim()) + ", text " +
                    std::to_string(text_->output_dim()));
  }
  if (vision_->output_dim() < 2) throw Error(kModule, "EncoderPair", "embedding dimension must be >= 2");
}

EncoderPair::EncoderPair(const EncoderPair& other) : vision_(other.vision_->clone()), text_(other.text_->clone()) {}

EncoderPair& EncoderPair::operator=(const EncoderPair& other) {
  if (this != &other) {
    vision_ = other.vision_->clone();
    text_ = other.text_->clone();
  }
  return *this;
}

nlohmann::ordered_json EncoderPair::describe() const {
  return {{"vision", vision_->describe()}, {"text", text_->describe()}};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::pair<Eigen::Index, double>> hashed_bag_of_words(std::string_view text, Eigen::Index buckets) {
  std::map<Eigen::Index, double> counts;
  for (const auto& tok : tokenize(text)) {
    counts[static_cast<Eigen::Index>(fnv1a64(tok) % static_cast<std::uint64_t>(buckets))] += 1.0;
  }
  double norm = 0.0;
  for (const auto& [_, c] : counts) norm += c * c;
  norm = std::sqrt(norm);
  std::vector<std::pair<Eigen::Index, double>> bow(counts.begin(), counts.end());
  for (auto& [_, w] : bow) w /= norm;
  return bow;
}

AffineVisionEncoder::AffineVisionEncoder(Eigen::Index input_dim, Eigen::Index output_dim, std::uint64_t seed)
    : in_(input_dim), out_(output_dim) {
  if (in_ < 1 || out_ < 2) throw Error(kModule, "AffineVisionEncoder", "need input_dim >= 1 and output_dim >= 2");
  params_ = init_affine(out_, in_, 1.0 / std::sqrt(static_cast<double>(in_)), seed);
}

Eigen::MatrixXd AffineVisionEncoder::forward(const Eigen::MatrixXd& features) const {
  if (features.cols() != in_) {
    throw Error(kModule, "AffineVisionEncoder", "expected " + std::to_string(in_) + " input features, got " +
                                                    std::to_string(features.cols()));
  }
  Eigen::Map<const RowMajor> w(params_.data(), out_, in_);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + out_ * in_, out_);
  Eigen::MatrixXd out = features * w.transpose();
  out.rowwise() += b.transpose();
  return out;
}

void AffineVisionEncoder::backward(const Eigen::MatrixXd& features, const Eigen::MatrixXd& grad_out,
                                   std::span<double> grad) const {
  Eigen::Map<RowMajor> gw(grad.data(), out_, in_);
  Eigen::Map<Eigen::VectorXd> gb(grad.data() + out_ * in_, out_);
  gw.noalias() += grad_out.transpose() * features;
  gb += grad_out.colwise().sum().transpose();
}

nlohmann::ordered_json AffineVisionEncoder::describe() const {
  return {{"kind", "affine"}, {"input_dim", in_}, {"output_dim", out_}};
}

HashedBowTextEncoder::HashedBowTextEncoder(Eigen::Index buckets, Eigen::Index output_dim, std::uint64_t seed)
    : buckets_(buckets), out_(output_dim) {
  if (buckets_ < 1 || out_ < 2) throw Error(kModule, "HashedBowTextEncoder", "need buckets >= 1 and output_dim >= 2");
  params_ = init_affine(out_, buckets_, 1.0 / std::sqrt(static_cast<double>(out_)), seed);
}

Eigen::MatrixXd HashedBowTextEncoder::forward(std::span<const std::string> captions) const {
  Eigen::Map<const RowMajor> w(params_.data(), out_, buckets_);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + out_ * buckets_, out_);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(captions.size()), out_);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    Eigen::VectorXd e = b;
    for (const auto& [bucket, weight] : hashed_bag_of_words(captions[i], buckets_)) e += weight * w.col(bucket);
    out.row(static_cast<Eigen::Index>(i)) = e.transpose();
  }
  return out;
}

void HashedBowTextEncoder::backward(std::span<const std::string> captions, const Eigen::MatrixXd& grad_out,
                                    std::span<double> grad) const {
  Eigen::Map<RowMajor> gw(grad.data(), out_, buckets_);
  Eigen::Map<Eigen::VectorXd> gb(grad.data() + out_ * buckets_, out_);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto g = grad_out.row(static_cast<Eigen::Index>(i)).transpose();
    for (const auto& [bucket, weight] : hashed_bag_of_words(captions[i], buckets_)) gw.col(bucket) += weight * g;
    gb += g;
  }
}

nlohmann::ordered_json HashedBowTextEncoder::describe() const {
  return {{"kind", "hashed_bow"}, {"buckets", buckets_}, {"output_dim", out_}};
}

EncoderPair make_reference_encoders(Eigen::Index feature_dim, Eigen::Index embed_dim, Eigen::Index text_buckets,
                                    std::uint64_t seed) {
  return EncoderPair(std::make_unique<AffineVisionEncoder>(feature_dim, embed_dim, derive_seed(seed, 0x71))
                     , std::make_unique<HashedBowTextEncoder>(text_buckets, embed_dim, derive_seed(seed, 0x72)));
}

EncoderPair make_encoders(const nlohmann::json& description, std::uint64_t seed) {
  try {
    const auto& v = description.at("vision");
    const auto& t = description.at("text");
    if (v.at("kind") != "affine") throw Error(kModule, "make_encoders", "unknown vision encoder kind " + v.at("kind").dump());
    if (t.at("kind") != "hashed_bow") throw Error(kModule, "make_encoders", "unknown text encoder kind " + t.at("kind").dump());
    return EncoderPair(
        std::make_unique<AffineVisionEncoder>(v.at("input_dim").get<Eigen::Index>(), v.at("output_dim").get<Eigen::Index>(),
                                              derive_seed(seed, 0x71)),
        std::make_unique<HashedBowTextEncoder>(t.at("buckets").get<Eigen::Index>(), t.at("output_dim").get<Eigen::Index>(),
                                               derive_seed(seed, 0x72)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "make_encoders", std::string("bad encoder description: ") + e.what());
  }
}

}  // namespace forge
