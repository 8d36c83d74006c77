// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace forge {

/// Row-major float32 matrix persisted as a flat little-endian binary file
/// plus a sidecar "<file>.json" holding {rows, dim, seed}.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t r) const { return {data.data() + r * dim, dim}; }
  bool operator==(const FeatureMatrix&) const = default;
};

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

/// Resolves image locators of the form "<file>#<row>" to feature vectors.
/// Relative files are resolved against `base_dir`; matrices load once.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path base_dir = {}) : base_dir_(std::move(base_dir)) {}

  Eigen::VectorXd lookup(const std::string& image_uri);
  /// One row per URI.
  Eigen::MatrixXd gather(std::span<const std::string> image_uris);
  std::size_t dim(const std::string& image_uri);

 private:
  const FeatureMatrix& matrix_for(const std::string& file);

  std::filesystem::path base_dir_;
  std::map<std::string, FeatureMatrix> cache_;
};

}  // namespace forge
