// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "forge/text_util.hpp"

namespace forge {

std::string_view to_string(ModalityTag tag) noexcept {
  switch (tag) {
    case ModalityTag::XRAY: return "XRAY";
    case ModalityTag::CT: return "CT";
    case ModalityTag::MRI: return "MRI";
    case ModalityTag::US: return "US";
    case ModalityTag::HISTOPATHOLOGY: return "HISTOPATHOLOGY";
    case ModalityTag::FUNDUS: return "FUNDUS";
    case ModalityTag::OTHER: return "OTHER";
  }
  return "OTHER";
}

std::string_view display_name(ModalityTag tag) noexcept {
  switch (tag) {
    case ModalityTag::XRAY: return "X-ray";
    case ModalityTag::CT: return "CT";
    case ModalityTag::MRI: return "MRI";
    case ModalityTag::US: return "ultrasound";
    case ModalityTag::HISTOPATHOLOGY: return "histopathology";
    case ModalityTag::FUNDUS: return "retinal fundus";
    case ModalityTag::OTHER: return "medical";
  }
  return "medical";
}

std::optional<ModalityTag> parse_modality(std::string_view text) {
  static const std::map<std::string, ModalityTag, std::less<>> kAliases = {
      {"xray", ModalityTag::XRAY},
      {"x-ray", ModalityTag::XRAY},
      {"x ray", ModalityTag::XRAY},
      {"radiograph", ModalityTag::XRAY},
      {"cxr", ModalityTag::XRAY},
      {"ct", ModalityTag::CT},
      {"computed tomography", ModalityTag::CT},
      {"mri", ModalityTag::MRI},
      {"mr", ModalityTag::MRI},
      {"magnetic resonance imaging", ModalityTag::MRI},
      {"us", ModalityTag::US},
      {"ultrasound", ModalityTag::US},
      {"sonography", ModalityTag::US},
      {"histopathology", ModalityTag::HISTOPATHOLOGY},
      {"histology", ModalityTag::HISTOPATHOLOGY},
      {"pathology", ModalityTag::HISTOPATHOLOGY},
      {"histo", ModalityTag::HISTOPATHOLOGY},
      {"fundus", ModalityTag::FUNDUS},
      {"retinal fundus", ModalityTag::FUNDUS},
      {"retina", ModalityTag::FUNDUS},
      {"other", ModalityTag::OTHER},
  };
  auto it = kAliases.find(collapse_whitespace(to_lower(text)));
  if (it == kAliases.end()) return std::nullopt;
  return it->second;
}

LabelInfoTriplet::LabelInfoTriplet(std::string category_label, std::string modality,
                                   std::optional<std::string> anatomy)
    : category_label_(trim(category_label)), modality_(trim(modality)) {
  if (category_label_.empty()) {
    throw Error("manifest_core", "LabelInfoTriplet", "category_label is empty");
  }
  if (modality_.empty()) {
    throw Error("manifest_core", "LabelInfoTriplet", "modality is empty for label '" + category_label_ + "'");
  }
  if (anatomy) {
    auto a = trim(*anatomy);
    if (!a.empty()) anatomy_ = std::move(a);
  }
  auto canon = [](const std::string& s) { return collapse_whitespace(to_lower(s)); };
  key_ = canon(category_label_);
  key_.push_back(kKeySeparator);
  key_ += canon(modality_);
  key_.push_back(kKeySeparator);
  if (anatomy_) key_ += canon(*anatomy_);
}

nlohmann::ordered_json LabelInfoTriplet::to_json() const {
  nlohmann::ordered_json j;
  j["category_label"] = category_label_;
  j["modality"] = modality_;
  j["anatomy"] = anatomy_ ? nlohmann::ordered_json(*anatomy_) : nlohmann::ordered_json(nullptr);
  return j;
}

LabelInfoTriplet LabelInfoTriplet::from_json(const nlohmann::json& j) {
  std::optional<std::string> anatomy;
  if (j.contains("anatomy") && !j.at("anatomy").is_null()) anatomy = j.at("anatomy").get<std::string>();
  return LabelInfoTriplet(j.at("category_label").get<std::string>(), j.at("modality").get<std::string>(),
                          std::move(anatomy));
}

std::optional<std::string> record_violation(const SampleRecord& r) {
  if (trim(r.record_id).empty()) return "empty record_id";
  if (trim(r.image_uri).empty()) return "empty image_uri";
  if (trim(r.source_dataset).empty()) return "empty source_dataset";
  if (const auto* c = std::get_if<InlineCaption>(&r.payload)) {
    if (trim(c->caption).empty()) return "empty caption";
  } else if (std::get<BankRef>(r.payload).triplet_key.empty()) {
    return "empty triplet_key";
  }
  return std::nullopt;
}

DatasetManifest::DatasetManifest(std::vector<SampleRecord> records, int version)
    : version_(version), records_(std::move(records)) {
  counts_.fill(0);
  std::unordered_set<std::string> seen;
  seen.reserve(records_.size());
  for (const auto& r : records_) {
    if (auto why = record_violation(r)) {
      throw Error("manifest_core", "DatasetManifest", "record '" + r.record_id + "': " + *why);
    }
    if (!seen.insert(r.record_id).second) {
      throw Error("manifest_core", "DatasetManifest", "duplicate record_id '" + r.record_id + "'");
    }
    ++counts_[static_cast<std::size_t>(r.modality)];
  }
}

std::map<ModalityTag, std::size_t> DatasetManifest::per_modality_counts() const {
  std::map<ModalityTag, std::size_t> out;
  for (auto tag : kAllModalities) out[tag] = count(tag);
  return out;
}

DatasetManifest merge_manifests(std::span<const DatasetManifest> parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<SampleRecord> merged;
  merged.reserve(total);
  std::unordered_set<std::string> seen;
  std::vector<std::string> collisions;
  for (const auto& p : parts) {
    for (const auto& r : p.records()) {
      if (!seen.insert(r.record_id).second) {
        if (std::find(collisions.begin(), collisions.end(), r.record_id) == collisions.end()) {
          collisions.push_back(r.record_id);
        }
        continue;
      }
      merged.push_back(r);
    }
  }
  if (!collisions.empty()) {
    std::string msg = "duplicate record_id across parts:";
    for (const auto& id : collisions) msg += " '" + id + "'";
    throw Error("manifest_core", "merge_manifests", msg);
  }
  int version = parts.empty() ? DatasetManifest::kVersion : parts.front().version();
  return DatasetManifest(std::move(merged), version);
}

CaptionBank::CaptionBank(CaptionBankMetadata metadata, Entries entries)
    : metadata_(std::move(metadata)), entries_(std::move(entries)) {
  for (const auto& [key, captions] : entries_) {
    if (key.empty()) throw Error("manifest_core", "CaptionBank", "empty triplet key");
    if (captions.empty()) throw Error("manifest_core", "CaptionBank", "entry '" + key + "' has no captions");
    for (const auto& c : captions) {
      if (trim(c).empty()) throw Error("manifest_core", "CaptionBank", "entry '" + key + "' has an empty caption");
    }
  }
}

const std::vector<std::string>* CaptionBank::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const std::vector<std::string>& CaptionBank::at(const std::string& key) const {
  if (const auto* e = find(key)) return *e;
  throw Error("manifest_core", "CaptionBank", "unresolvable triplet key '" + key + "'");
}

std::vector<std::string> unresolved_bank_refs(const DatasetManifest& manifest, const CaptionBank& bank) {
  std::vector<std::string> missing;
  std::unordered_set<std::string> reported;
  for (const auto& r : manifest.records()) {
    if (const auto* ref = std::get_if<BankRef>(&r.payload)) {
      if (!bank.find(ref->triplet_key) && reported.insert(ref->triplet_key).second) {
        missing.push_back(ref->triplet_key);
      }
    }
  }
  return missing;
}

}  // namespace forge
