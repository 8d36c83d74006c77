// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forge/csv.hpp"
#include "forge/features.hpp"
#include "forge/manifest.hpp"

namespace forge {

enum class SourceKind { label_only, image_text, multilabel };

std::string_view to_string(SourceKind kind) noexcept;
std::optional<SourceKind> parse_source_kind(std::string_view text);

/// Column mapping from a source table onto SampleRecord fields.
struct SchemaMap {
  std::string source_dataset;
  std::string image_column;
  std::optional<std::string> id_column;  // defaults to the 1-based data row number
  std::optional<std::string> label_column;
  std::vector<std::string> indicator_columns;
  std::optional<std::string> caption_column;
  std::optional<ModalityTag> modality;  // fixed for the whole table...
  std::optional<std::string> modality_column;  // ...or read per row
  std::optional<std::string> modality_name;  // triplet modality text; defaults to display_name()
  std::optional<std::string> anatomy_column;
};

/// Throws forge::Error naming every column the schema needs but the table lacks.
void validate_schema(const CsvTable& table, const SchemaMap& schema, SourceKind kind);

struct IngestResult {
  std::vector<SampleRecord> records;
  std::vector<LabelInfoTriplet> triplets;  // distinct, first-seen order
  std::vector<std::size_t> skipped_rows;   // 1-based data rows
};

IngestResult ingest_label_only(const CsvTable& table, const SchemaMap& schema);
IngestResult ingest_image_text(const CsvTable& table, const SchemaMap& schema);
IngestResult ingest_multilabel(const CsvTable& table, const SchemaMap& schema);
IngestResult ingest(const CsvTable& table, const SchemaMap& schema, SourceKind kind);

struct LabeledRecord {
  SampleRecord record;
  LabelInfoTriplet triplet;
};

/// One BankRef record per positive indicator of data row `row` (0-based), or
/// a single "no finding" record when none is positive.
std::vector<LabeledRecord> expand_multilabel(const CsvTable& table, std::size_t row, const SchemaMap& schema);

struct DedupReport {
  std::vector<std::string> dropped;  // exact duplicates, by record_id
  std::vector<std::pair<std::string, std::string>> rejected;  // (record_id, reason)
};

struct DedupResult {
  std::vector<SampleRecord> kept;
  DedupReport report;
};

/// Keeps the first record per (image_uri, payload) pair and every record that
/// satisfies the SampleRecord invariants. Never throws on bad records.
DedupResult dedup_and_validate(std::vector<SampleRecord> records);

struct FixtureSpec {
  std::vector<ModalityTag> modalities{ModalityTag::XRAY, ModalityTag::MRI, ModalityTag::FUNDUS};
  int classes_per_modality = 3;
  int rows_per_class = 40;
  int test_rows_per_class = 0;  // trailing rows of each class marked split=test
  int feature_dim = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string feature_file = "features.f32";  // referenced by image_uri
};

struct FixtureClass {
  ModalityTag modality;
  std::string label;
  std::string anatomy;
  std::string source_dataset;
};

/// Synthetic label-only corpus: a table with columns image_id, image_uri,
/// label, modality, anatomy, source_dataset, split, and one feature row per
/// table row. Class centroids are random unit directions (shared modality
/// offset plus a class offset); rows add isotropic Gaussian noise.
struct Fixture {
  CsvTable table;
  FeatureMatrix features;
  std::vector<FixtureClass> classes;
};

Fixture generate_fixture(const FixtureSpec& spec);

/// Built-in fixture vocabulary: label names and anatomy for a modality.
const std::vector<std::string>& fixture_labels(ModalityTag tag);
std::string_view fixture_anatomy(ModalityTag tag);
std::string fixture_source_name(ModalityTag tag);

}  // namespace forge
