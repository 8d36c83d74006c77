// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <iomanip>
#include <set>
#include <sstream>

#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "forge/text_util.hpp"

namespace forge {

StatsReport compute_stats(const DatasetManifest& manifest, const CaptionBank* bank) {
  StatsReport report;
  report.total = manifest.size();
  if (manifest.empty()) return report;

  for (auto tag : kAllModalities) {
    if (auto c = manifest.count(tag)) {
      report.modality_percent[tag] = 100.0 * static_cast<double>(c) / static_cast<double>(manifest.size());
    }
  }

  // Mean words of a bank entry, cached per key.
  std::map<std::string, double> entry_mean;
  auto bank_words = [&](const std::string& key) -> double {
    if (auto it = entry_mean.find(key); it != entry_mean.end()) return it->second;
    const auto* captions = bank->find(key);
    if (captions == nullptr) throw Error("manifest_core", "compute_stats", "unresolvable BankRef key '" + key + "'");
    double sum = 0.0;
    for (const auto& c : *captions) sum += static_cast<double>(word_count(c));
    return entry_mean[key] = sum / static_cast<double>(captions->size());
  };

  std::map<std::string, double> word_sum;
  std::set<std::string> without_text;  // sources with bank references but no bank
  for (const auto& r : manifest.records()) {
    ++report.records_per_source[r.source_dataset];
    double words = 0.0;
    if (const auto* c = std::get_if<InlineCaption>(&r.payload)) {
      words = static_cast<double>(word_count(c->caption));
    } else if (bank == nullptr) {
      without_text.insert(r.source_dataset);
    } else {
      words = bank_words(std::get<BankRef>(r.payload).triplet_key);
    }
    word_sum[r.source_dataset] += words;
  }
  for (const auto& [source, n] : report.records_per_source) {
    if (!without_text.count(source)) report.mean_caption_words[source] = word_sum[source] / static_cast<double>(n);
  }
  return report;
}

nlohmann::ordered_json StatsReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  nlohmann::ordered_json dist = nlohmann::ordered_json::object();
  for (const auto& [tag, pct] : modality_percent) dist[std::string(to_string(tag))] = pct;
  j["modality_percent"] = std::move(dist);
  nlohmann::ordered_json sources = nlohmann::ordered_json::object();
  for (const auto& [source, n] : records_per_source) {
    auto it = mean_caption_words.find(source);
    sources[source] = {{"records", n},
                       {"mean_caption_words", it == mean_caption_words.end() ? nlohmann::ordered_json(nullptr)
                                                                            : nlohmann::ordered_json(it->second)}};
  }
  j["sources"] = std::move(sources);
  return j;
}

std::string StatsReport::to_markdown() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "# Manifest statistics\n\nTotal records: " << total << "\n\n";
  os << "| Modality | Share (%) |\n|---|---:|\n";
  for (const auto& [tag, pct] : modality_percent) os << "| " << to_string(tag) << " | " << pct << " |\n";
  os << "\n| Source | Records | Mean caption words |\n|---|---:|---:|\n";
  for (const auto& [source, n] : records_per_source) {
    os << "| " << source << " | " << n << " | ";
    if (auto it = mean_caption_words.find(source); it != mean_caption_words.end()) {
      os << it->second;
    } else {
      os << "-";
    }
    os << " |\n";
  }
  return os.str();
}

}  // namespace forge
