// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Unified image-text data model shared by every source adapter, plus the
// on-disk manifest (JSONL) and caption bank (JSON) formats.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

enum class ModalityTag { XRAY, CT, MRI, US, HISTOPATHOLOGY, FUNDUS, OTHER };

inline constexpr std::array<ModalityTag, 7> kAllModalities = {
    ModalityTag::XRAY,   ModalityTag::CT,    ModalityTag::MRI, ModalityTag::US,
    ModalityTag::HISTOPATHOLOGY, ModalityTag::FUNDUS, ModalityTag::OTHER};

/// Canonical upper-case name used in files ("XRAY", "HISTOPATHOLOGY", ...).
std::string_view to_string(ModalityTag tag) noexcept;

/// Human-readable phrase used when a modality is spliced into text.
std::string_view display_name(ModalityTag tag) noexcept;

/// Case-insensitive parse accepting canonical names and common spellings
/// ("x-ray", "ultrasound", "histology", "retinal fundus", ...).
std::optional<ModalityTag> parse_modality(std::string_view text);

/// The (category, modality, anatomy) key that drives caption generation.
class LabelInfoTriplet {
 public:
  static constexpr char kKeySeparator = '\x1f';

  /// Trims fields; throws forge::Error if category or modality is blank.
  /// A blank anatomy is treated as absent.
  LabelInfoTriplet(std::string category_label, std::string modality,
                   std::optional<std::string> anatomy = std::nullopt);

  const std::string& category_label() const noexcept { return category_label_; }
  const std::string& modality() const noexcept { return modality_; }
  const std::optional<std::string>& anatomy() const noexcept { return anatomy_; }

  /// Lowercased, whitespace-collapsed fields joined by the unit separator.
  const std::string& key() const noexcept { return key_; }

  friend bool operator==(const LabelInfoTriplet& a, const LabelInfoTriplet& b) { return a.key_ == b.key_; }

  nlohmann::ordered_json to_json() const;
  static LabelInfoTriplet from_json(const nlohmann::json& j);

 private:
  std::string category_label_;
  std::string modality_;
  std::optional<std::string> anatomy_;
  std::string key_;
};

struct InlineCaption {
  std::string caption;
  bool operator==(const InlineCaption&) const = default;
};

struct BankRef {
  std::string triplet_key;
  bool operator==(const BankRef&) const = default;
};

using Payload = std::variant<InlineCaption, BankRef>;

struct SampleRecord {
  std::string record_id;
  std::string image_uri;
  std::string source_dataset;
  ModalityTag modality = ModalityTag::OTHER;
  Payload payload;

  bool operator==(const SampleRecord&) const = default;
};

/// Returns the reason a record breaks the SampleRecord invariants, if any.
std::optional<std::string> record_violation(const SampleRecord& record);

/// Immutable ordered collection of records with per-modality counts.
class DatasetManifest {
 public:
  static constexpr int kVersion = 1;

  DatasetManifest() { counts_.fill(0); }

  /// Throws forge::Error naming the offending record_id when a record is
  /// invalid or an id repeats.
  explicit DatasetManifest(std::vector<SampleRecord> records, int version = kVersion);

  int version() const noexcept { return version_; }
  const std::vector<SampleRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t count(ModalityTag tag) const noexcept { return counts_[static_cast<std::size_t>(tag)]; }
  std::map<ModalityTag, std::size_t> per_modality_counts() const;

  bool operator==(const DatasetManifest& other) const {
    return version_ == other.version_ && records_ == other.records_;
  }

 private:
  int version_ = kVersion;
  std::vector<SampleRecord> records_;
  std::array<std::size_t, kAllModalities.size()> counts_{};
};

/// Serialized JSONL bytes: header line, then one line per record.
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);

std::filesystem::path write_manifest(const DatasetManifest& manifest, const std::filesystem::path& destination);
DatasetManifest read_manifest(const std::filesystem::path& source);

/// Concatenates parts in order. Throws listing every colliding record_id.
DatasetManifest merge_manifests(std::span<const DatasetManifest> parts);

struct CaptionBankMetadata {
  std::string generator;
  std::string created;  // ISO 8601
  int captions_per_key = 1;

  bool operator==(const CaptionBankMetadata&) const = default;
};

/// Triplet key -> ordered captions. Index j of an entry is stable.
class CaptionBank {
 public:
  using Entries = std::map<std::string, std::vector<std::string>>;

  CaptionBank() = default;
  /// Throws forge::Error if an entry is empty or holds an empty caption.
  CaptionBank(CaptionBankMetadata metadata, Entries entries);

  const CaptionBankMetadata& metadata() const noexcept { return metadata_; }
  const Entries& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// nullptr when the key is absent.
  const std::vector<std::string>* find(const std::string& key) const;
  const std::vector<std::string>& at(const std::string& key) const;

  bool operator==(const CaptionBank&) const = default;

 private:
  CaptionBankMetadata metadata_;
  Entries entries_;
};

std::string serialize_caption_bank(const CaptionBank& bank);
CaptionBank parse_caption_bank(std::string_view text);
void write_caption_bank(const CaptionBank& bank, const std::filesystem::path& destination);
CaptionBank read_caption_bank(const std::filesystem::path& source);

/// Keys referenced by BankRef records that the bank cannot resolve, in
/// first-seen order without repeats.
std::vector<std::string> unresolved_bank_refs(const DatasetManifest& manifest, const CaptionBank& bank);

struct StatsReport {
  std::size_t total = 0;
  std::map<ModalityTag, double> modality_percent;  // only modalities present
  std::map<std::string, std::size_t> records_per_source;
  /// Per source_dataset; absent for sources with bank references when no
  /// bank was supplied.
  std::map<std::string, double> mean_caption_words;

  nlohmann::ordered_json to_json() const;
  std::string to_markdown() const;
};

/// Throws when `bank` is supplied but misses a referenced key.
StatsReport compute_stats(const DatasetManifest& manifest, const CaptionBank* bank = nullptr);

}  // namespace forge
