// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration (strict TOML plus --section.key=value overrides) and the
// `forge` command surface.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/caption.hpp"
#include "forge/ingest.hpp"
#include "forge/trainer.hpp"

namespace forge {

struct SourceConfig {
  std::filesystem::path path;
  SourceKind kind = SourceKind::label_only;
  SchemaMap schema;
};

struct LlmConfig {
  std::string provider = "http";  // or "mock"
  HttpClientConfig http;
  std::filesystem::path mock_dir;
};

struct CaptionConfig {
  int captions_per_key = 10;
  std::string mode = "offline";  // or "llm"
  std::optional<std::string> style;
  int max_in_flight = 1;
  double requests_per_second = 0.0;
  int max_attempts = 2;
  int backoff_ms = 500;
  std::optional<std::filesystem::path> cache;
  LlmConfig llm;
};

struct EvaluationConfig {
  std::optional<std::filesystem::path> registry;
  std::size_t template_count = 0;  // 0 uses every template
  std::vector<double> probe_fractions;
  std::optional<std::filesystem::path> checkpoint;  // defaults to the train output
};

struct Override {
  std::string key;  // dotted, e.g. "training.batch_size"
  std::string value;
};

struct RunConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::filesystem::path feature_root;  // base for "<file>#<row>" image locators
  std::vector<SourceConfig> sources;
  CaptionConfig caption;
  TrainingConfig training;  // training.seed mirrors `seed`
  std::int64_t checkpoint_interval = 0;
  std::optional<std::filesystem::path> resume_from;
  EvaluationConfig evaluation;
  std::vector<Override> overrides;  // as given, in order

  nlohmann::ordered_json to_json() const;
  std::string hash() const;
};

/// Parses "--section.key=value" arguments; throws ConfigError otherwise.
std::vector<Override> parse_overrides(std::span<const std::string> args);

/// Strict parse: unknown keys and ill-typed values raise ConfigError.
/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                           std::span<const Override> overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, std::span<const Override> overrides = {});

/// Entry point behind the `forge` binary: 0 on success, 1 on runtime failure,
/// 2 on invalid usage or configuration.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Writes a fixture as a ready-to-run project: features, one label-only CSV
/// per modality (training rows), train/test splits, registry.json and
/// forge.toml.
void write_fixture_project(const Fixture& fixture, const FixtureSpec& spec, const std::filesystem::path& dir);

}  // namespace forge
