// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/features.hpp"

#include <bit>
#include <charconv>
#include <cstring>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {
constexpr const char* kModule = "ingestors";

std::filesystem::path sidecar_path(const std::filesystem::path& path) { return path.string() + ".json"; }

static_assert(std::endian::native == std::endian::little, "feature files are little-endian");
}  // namespace

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  if (m.data.size() != m.rows * m.dim) throw Error(kModule, "write_feature_matrix", "data size does not match rows*dim");
  std::string bytes(m.data.size() * sizeof(float), '\0');
  if (!m.data.empty()) std::memcpy(bytes.data(), m.data.data(), bytes.size());
  write_file_atomic(path.string(), bytes, kModule, "write_feature_matrix");
  nlohmann::ordered_json meta;
  meta["rows"] = m.rows;
  meta["dim"] = m.dim;
  meta["seed"] = m.seed;
  write_file_atomic(sidecar_path(path).string(), meta.dump() + "\n", kModule, "write_feature_matrix");
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(sidecar_path(path).string(), kModule, "read_feature_matrix"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, "read_feature_matrix", 0, std::string("malformed sidecar: ") + e.what());
  }
  FeatureMatrix m;
  try {
    m.rows = meta.at("rows").get<std::size_t>();
    m.dim = meta.at("dim").get<std::size_t>();
    m.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, "read_feature_matrix", 0, std::string("sidecar: ") + e.what());
  }
  auto bytes = read_file(path.string(), kModule, "read_feature_matrix");
  if (bytes.size() != m.rows * m.dim * sizeof(float)) {
    throw IntegrityError(kModule, "read_feature_matrix",
                         "'" + path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, sidecar implies " +
                             std::to_string(m.rows * m.dim * sizeof(float)));
  }
  m.data.resize(m.rows * m.dim);
  if (!bytes.empty()) std::memcpy(m.data.data(), bytes.data(), bytes.size());
  return m;
}

const FeatureMatrix& FeatureStore::matrix_for(const std::string& file) {
  auto it = cache_.find(file);
  if (it != cache_.end()) return it->second;
  std::filesystem::path p(file);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  return cache_.emplace(file, read_feature_matrix(p)).first->second;
}

namespace {
std::pair<std::string, std::size_t> split_locator(const std::string& uri) {
  auto hash = uri.rfind('#');
  if (hash == std::string::npos || hash + 1 == uri.size()) {
    throw Error(kModule, "FeatureStore", "image_uri '" + uri + "' is not of the form <file>#<row>");
  }
  std::size_t row = 0;
  const char* first = uri.data() + hash + 1;
  const char* last = uri.data() + uri.size();
  auto [ptr, ec] = std::from_chars(first, last, row);
  if (ec != std::errc() || ptr != last) throw Error(kModule, "FeatureStore", "image_uri '" + uri + "' has a bad row index");
  return {uri.substr(0, hash), row};
}
}  // namespace

Eigen::VectorXd FeatureStore::lookup(const std::string& image_uri) {
  auto [file, row] = split_locator(image_uri);
  const auto& m = matrix_for(file);
  if (row >= m.rows) throw Error(kModule, "FeatureStore", "image_uri '" + image_uri + "' is past the last row");
  Eigen::VectorXd v(static_cast<Eigen::Index>(m.dim));
  auto src = m.row(row);
  for (std::size_t i = 0; i < m.dim; ++i) v[static_cast<Eigen::Index>(i)] = src[i];
  return v;
}

Eigen::MatrixXd FeatureStore::gather(std::span<const std::string> image_uris) {
  if (image_uris.empty()) return {};
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < image_uris.size(); ++i) {
    auto v = lookup(image_uris[i]);
    if (i == 0) out.resize(static_cast<Eigen::Index>(image_uris.size()), v.size());
    if (v.size() != out.cols()) throw Error(kModule, "FeatureStore", "image_uri '" + image_uris[i] + "' has a different feature dimension");
    out.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return out;
}

std::size_t FeatureStore::dim(const std::string& image_uri) { return matrix_for(split_locator(image_uri).first).dim; }

}  // namespace forge
