// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <unordered_set>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "caption_factory";

// Spaces requests at least 1/rate seconds apart across all workers.
class RequestPacer {
 public:
  explicit RequestPacer(double requests_per_second) : rate_(requests_per_second) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                         std::chrono::duration<double>(1.0 / rate_));
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double rate_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct KeyOutcome {
  std::vector<std::string> captions;
  bool regenerated = false;
  bool flagged = false;
  std::exception_ptr error;
};

}  // namespace

std::string CaptionCache::cache_key(const LabelInfoTriplet& t, int captions, std::string_view style) {
  return sha256_hex(t.key() + "\x1e" + std::to_string(captions) + "\x1e" + sha256_hex(style));
}

std::optional<std::vector<std::string>> CaptionCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CaptionCache::put(const std::string& key, std::vector<std::string> captions) {
  std::lock_guard lock(mu_);
  entries_[key] = std::move(captions);
}

void CaptionCache::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  {
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : entries_) j[k] = v;
  }
  write_file_atomic(path.string(), j.dump() + "\n", kModule, "CaptionCache");
}

CaptionCache CaptionCache::load(const std::filesystem::path& path) {
  CaptionCache cache;
  if (!std::filesystem::exists(path)) return cache;
  try {
    auto j = nlohmann::json::parse(read_file(path.string(), kModule, "CaptionCache"));
    for (auto it = j.begin(); it != j.end(); ++it) cache.entries_[it.key()] = it.value().get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, "CaptionCache", 0, std::string("malformed cache file: ") + e.what());
  }
  return cache;
}

GenerationResult generate_caption_bank(std::span<const LabelInfoTriplet> triplets, LlmClient& client,
                                       const GenerationOptions& options, CaptionCache* cache) {
  const int m = options.captions_per_key;
  if (m < 1) throw Error(kModule, "generate_caption_bank", "captions_per_key must be >= 1");
  if (options.retry.max_attempts < 1) throw Error(kModule, "generate_caption_bank", "max_attempts must be >= 1");

  std::vector<LabelInfoTriplet> distinct;
  {
    std::unordered_set<std::string> seen;
    for (const auto& t : triplets) {
      if (seen.insert(t.key()).second) distinct.push_back(t);
    }
  }

  auto sleep = options.sleep ? options.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  RequestPacer pacer(options.requests_per_second);
  std::atomic<std::size_t> calls{0};
  std::vector<KeyOutcome> outcomes(distinct.size());

  auto passes_rules = [&](const LabelInfoTriplet& t, const std::vector<std::string>& captions) {
    CaptionBank single(CaptionBankMetadata{}, {{t.key(), captions}});
    return validate_caption_bank(single, std::span(&t, 1), options.rules).ok();
  };

  auto produce = [&](std::size_t index) {
    const auto& triplet = distinct[index];
    auto& out = outcomes[index];
    const auto cache_key = CaptionCache::cache_key(triplet, m, options.style_directives);
    if (cache != nullptr) {
      if (auto hit = cache->get(cache_key)) {
        out.captions = std::move(*hit);
        return;
      }
    }
    const auto prompt = build_prompt(PromptSpec{triplet, m, options.style_directives});
    std::string last_problem = "no attempt made";
    std::optional<std::vector<std::string>> candidate;
    for (int attempt = 1; attempt <= options.retry.max_attempts; ++attempt) {
      if (auto d = options.retry.delay_before(attempt); d.count() > 0) sleep(d);
      pacer.acquire();
      std::string response;
      try {
        ++calls;
        response = client.complete(prompt);
      } catch (const std::exception& e) {
        last_problem = std::string("client failure: ") + e.what();
        continue;
      }
      auto items = parse_numbered_list(response);
      if (items.size() < static_cast<std::size_t>(m)) {
        last_problem = "parsed " + std::to_string(items.size()) + " of " + std::to_string(m) + " captions";
        continue;
      }
      items.resize(static_cast<std::size_t>(m));
      try {
        CaptionBank probe(CaptionBankMetadata{}, {{triplet.key(), items}});
      } catch (const Error& e) {
        last_problem = e.what();
        continue;
      }
      if (passes_rules(triplet, items)) {
        candidate = std::move(items);
        out.flagged = false;
        break;
      }
      // Regenerate once when the rules fail; keep the first draft as fallback.
      const bool first_failure = !out.regenerated;
      if (!candidate || !first_failure) candidate = std::move(items);
      out.flagged = true;
      if (!first_failure) break;
      out.regenerated = true;
    }
    if (!candidate) {
      throw Error(kModule, "generate_caption_bank",
                  "triplet '" + triplet.key() + "' failed after " + std::to_string(options.retry.max_attempts) +
                      " attempt(s): " + last_problem);
    }
    out.captions = std::move(*candidate);
    if (cache != nullptr && !out.flagged) cache->put(cache_key, out.captions);
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.max_in_flight)), distinct.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      try {
        produce(i);
      } catch (...) {
        outcomes[i].error = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < distinct.size(); i = next++) {
          try {
            produce(i);
          } catch (...) {
            outcomes[i].error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
  }

  GenerationResult result;
  CaptionBank::Entries entries;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const auto& key = distinct[i].key();
    if (outcomes[i].regenerated) result.regenerated_keys.push_back(key);
    if (outcomes[i].flagged) result.flagged_keys.push_back(key);
    entries.emplace(key, std::move(outcomes[i].captions));
  }
  std::sort(result.regenerated_keys.begin(), result.regenerated_keys.end());
  std::sort(result.flagged_keys.begin(), result.flagged_keys.end());
  result.client_calls = calls.load();
  result.bank = CaptionBank(
      CaptionBankMetadata{client.identity(), options.clock ? options.clock() : utc_timestamp(), m}, std::move(entries));
  return result;
}

}  // namespace forge
