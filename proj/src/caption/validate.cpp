// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <unordered_set>

#include "forge/caption.hpp"
#include "forge/text_util.hpp"

namespace forge {

std::string_view to_string(CaptionCheck check) noexcept {
  switch (check) {
    case CaptionCheck::label_mention: return "label_mention";
    case CaptionCheck::word_count: return "word_count";
    case CaptionCheck::empty_or_duplicate: return "empty_or_duplicate";
    case CaptionCheck::missing_entry: return "missing_entry";
  }
  return "unknown";
}

bool ValidationReport::has(const std::string& key, CaptionCheck check) const {
  auto it = failures.find(key);
  if (it == failures.end()) return false;
  for (const auto& f : it->second) {
    if (f.check == check) return true;
  }
  return false;
}

nlohmann::ordered_json ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["ok"] = ok();
  nlohmann::ordered_json entries = nlohmann::ordered_json::object();
  for (const auto& [key, list] : failures) {
    auto& arr = entries[key] = nlohmann::ordered_json::array();
    for (const auto& f : list) {
      arr.push_back({{"check", std::string(to_string(f.check))}, {"index", f.index}, {"detail", f.detail}});
    }
  }
  j["failures"] = std::move(entries);
  return j;
}

namespace {

std::vector<std::string> label_terms(const std::string& label, const ValidationRules& rules) {
  std::vector<std::string> terms{label};
  const auto folded = to_lower(label);
  for (const auto& group : rules.alias_groups) {
    bool member = false;
    for (const auto& term : group) member = member || to_lower(term) == folded;
    if (member) terms.insert(terms.end(), group.begin(), group.end());
  }
  return terms;
}

}  // namespace

ValidationReport validate_caption_bank(const CaptionBank& bank, std::span<const LabelInfoTriplet> triplets,
                                       const ValidationRules& rules) {
  ValidationReport report;
  std::unordered_set<std::string> checked;
  for (const auto& t : triplets) {
    if (!checked.insert(t.key()).second) continue;
    const auto* captions = bank.find(t.key());
    if (captions == nullptr) {
      report.failures[t.key()].push_back({CaptionCheck::missing_entry, 0, "no entry for triplet"});
      continue;
    }
    const auto terms = label_terms(t.category_label(), rules);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < captions->size(); ++i) {
      const auto& c = (*captions)[i];
      std::vector<CaptionFailure> found;
      auto normalized = collapse_whitespace(to_lower(c));
      if (normalized.empty()) {
        found.push_back({CaptionCheck::empty_or_duplicate, i, "empty caption"});
      } else if (!seen.insert(normalized).second) {
        found.push_back({CaptionCheck::empty_or_duplicate, i, "duplicate caption"});
      }
      bool mentions = false;
      for (const auto& term : terms) mentions = mentions || contains_icase(c, term);
      if (!mentions) found.push_back({CaptionCheck::label_mention, i, "caption omits '" + t.category_label() + "'"});
      auto words = word_count(c);
      if (words < rules.min_words || words > rules.max_words) {
        found.push_back({CaptionCheck::word_count, i,
                         std::to_string(words) + " words, allowed [" + std::to_string(rules.min_words) + ", " +
                             std::to_string(rules.max_words) + "]"});
      }
      if (!found.empty()) {
        auto& list = report.failures[t.key()];
        list.insert(list.end(), found.begin(), found.end());
      }
    }
  }
  return report;
}

}  // namespace forge
