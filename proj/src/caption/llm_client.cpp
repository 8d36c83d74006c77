// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>

#include <httplib.h>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {
constexpr const char* kModule = "caption_factory";
}

std::string MockLlmClient::prompt_hash(std::string_view prompt) { return sha256_hex(prompt).substr(0, 16); }

std::string MockLlmClient::complete(const std::string& prompt) {
  auto path = dir_ / (prompt_hash(prompt) + ".txt");
  if (!std::filesystem::exists(path)) {
    throw Error(kModule, "MockLlmClient", "no canned response at '" + path.string() + "'");
  }
  return read_file(path.string(), kModule, "MockLlmClient");
}

std::string CallbackLlmClient::complete(const std::string& prompt) {
  std::lock_guard lock(mu_);
  return fn_(prompt);
}

HttpLlmClient::HttpLlmClient(HttpClientConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError(kModule, "HttpLlmClient", "endpoint is empty");
  if (config_.model.empty()) throw ConfigError(kModule, "HttpLlmClient", "model is empty");
}

std::string HttpLlmClient::complete(const std::string& prompt) {
  httplib::Client cli(config_.endpoint);
  cli.set_connection_timeout(config_.timeout_seconds, 0);
  cli.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  nlohmann::json body = {
      {"model", config_.model},
      {"temperature", config_.temperature},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
  };
  if (config_.seed) body["seed"] = *config_.seed;

  auto res = cli.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(kModule, "HttpLlmClient", "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(kModule, "HttpLlmClient", "HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
  }
  try {
    auto reply = nlohmann::json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "HttpLlmClient", std::string("unexpected response body: ") + e.what());
  }
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds(0);
  double scale = std::pow(backoff_multiplier, attempt - 2);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(static_cast<double>(backoff_base.count()) * scale)));
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace forge
