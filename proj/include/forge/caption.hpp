// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Label-to-caption generation: prompt construction, LLM clients, the
// caption-bank generator with retries, an offline template grammar and
// rule-based bank validation.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/manifest.hpp"

namespace forge {

std::string_view default_style_directives() noexcept;

struct PromptSpec {
  LabelInfoTriplet triplet;
  int captions = 10;
  std::string style_directives = std::string(default_style_directives());
};

/// Label-info prompt followed by style and diversification instructions.
/// Pure function of the spec.
std::string build_prompt(const PromptSpec& spec);

/// Items of a numbered list ("1. ...", "2) ...") in order, numbered
/// consecutively from 1. Lines that do not continue the sequence are ignored.
std::vector<std::string> parse_numbered_list(std::string_view response);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Returns the completion text; throws forge::Error on transport failure.
  /// Must be safe to call from several threads at once.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string identity() const = 0;
};

/// Reads canned responses from `<dir>/<prompt_hash(prompt)>.txt`.
class MockLlmClient : public LlmClient {
 public:
  explicit MockLlmClient(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string prompt_hash(std::string_view prompt);

  std::string complete(const std::string& prompt) override;
  std::string identity() const override { return "mock:" + dir_.string(); }

 private:
  std::filesystem::path dir_;
};

/// Adapts a callable; handy for scripted or instrumented clients.
class CallbackLlmClient : public LlmClient {
 public:
  using Fn = std::function<std::string(const std::string&)>;
  CallbackLlmClient(Fn fn, std::string identity = "callback") : fn_(std::move(fn)), identity_(std::move(identity)) {}

  std::string complete(const std::string& prompt) override;
  std::string identity() const override { return identity_; }

 private:
  std::mutex mu_;
  Fn fn_;
  std::string identity_;
};

struct HttpClientConfig {
  std::string endpoint;  // e.g. "https://api.openai.com"
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "FORGE_LLM_API_KEY";
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  int timeout_seconds = 120;
};

/// OpenAI-compatible chat-completions client. Credentials come only from the
/// environment variable named in the config.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientConfig config);

  std::string complete(const std::string& prompt) override;
  std::string identity() const override { return "http:" + config_.model; }

 private:
  HttpClientConfig config_;
};

struct RetryPolicy {
  int max_attempts = 2;
  std::chrono::milliseconds backoff_base{500};
  double backoff_multiplier = 2.0;

  /// Delay before attempt `attempt` (1-based; attempt 1 has no delay).
  std::chrono::milliseconds delay_before(int attempt) const;
};

struct ValidationRules {
  std::size_t min_words = 4;
  std::size_t max_words = 80;
  /// Groups of interchangeable terms, e.g. {"MI", "myocardial infarction"}.
  std::vector<std::vector<std::string>> alias_groups;
};

enum class CaptionCheck { label_mention, word_count, empty_or_duplicate, missing_entry };

std::string_view to_string(CaptionCheck check) noexcept;

struct CaptionFailure {
  CaptionCheck check;
  std::size_t index;  // caption index within the entry
  std::string detail;
};

struct ValidationReport {
  std::map<std::string, std::vector<CaptionFailure>> failures;  // by triplet key

  bool ok() const noexcept { return failures.empty(); }
  bool has(const std::string& key, CaptionCheck check) const;
  nlohmann::ordered_json to_json() const;
};

/// Side-effect free rule check of every triplet's entry.
ValidationReport validate_caption_bank(const CaptionBank& bank, std::span<const LabelInfoTriplet> triplets,
                                       const ValidationRules& rules = {});

/// Captions already paid for, keyed by triplet key, count and style hash.
class CaptionCache {
 public:
  CaptionCache() = default;
  CaptionCache(CaptionCache&& other) noexcept : entries_(std::move(other.entries_)) {}
  CaptionCache& operator=(CaptionCache&& other) noexcept {
    entries_ = std::move(other.entries_);
    return *this;
  }

  static std::string cache_key(const LabelInfoTriplet& t, int captions, std::string_view style);

  std::optional<std::vector<std::string>> get(const std::string& key) const;
  void put(const std::string& key, std::vector<std::string> captions);

  void save(const std::filesystem::path& path) const;
  static CaptionCache load(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::vector<std::string>> entries_;
};

struct GenerationOptions {
  int captions_per_key = 10;
  std::string style_directives = std::string(default_style_directives());
  RetryPolicy retry;
  int max_in_flight = 1;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  ValidationRules rules;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
  std::function<std::string()> clock;  // ISO 8601 creation stamp; defaults to UTC now
};

struct GenerationResult {
  CaptionBank bank;
  std::vector<std::string> regenerated_keys;  // failed validation once
  std::vector<std::string> flagged_keys;      // still failing after regeneration
  std::size_t client_calls = 0;
};

/// One LLM request per distinct triplet key (plus retries). Throws
/// forge::Error naming the key when a triplet exhausts its attempts.
GenerationResult generate_caption_bank(std::span<const LabelInfoTriplet> triplets, LlmClient& client,
                                       const GenerationOptions& options = {}, CaptionCache* cache = nullptr);

/// Number of distinct captions the offline grammar can produce per triplet.
std::size_t offline_grammar_capacity() noexcept;

/// Deterministic template grammar. Caption 0 is always the plain
/// "A medical <modality> image showing <label> in the <anatomy>." form; the
/// rest are a seeded draw without replacement from the grammar.
CaptionBank offline_caption_bank(std::span<const LabelInfoTriplet> triplets, int captions_per_key, std::uint64_t seed);

/// UTC "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace forge
