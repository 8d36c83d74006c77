// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <unordered_map>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/ingest.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "ingestors";

struct TripletCollector {
  std::vector<LabelInfoTriplet> triplets;
  std::unordered_set<std::string> keys;

  void add(const LabelInfoTriplet& t) {
    if (keys.insert(t.key()).second) triplets.push_back(t);
  }
};

// Resolves the per-row fields every adapter shares.
class RowReader {
 public:
  RowReader(const CsvTable& table, const SchemaMap& schema, const char* op) : table_(table), schema_(schema), op_(op) {}

  std::string record_id(std::size_t row) const {
    std::string local = schema_.id_column ? trim(table_.at(row, *schema_.id_column)) : std::to_string(row + 1);
    return schema_.source_dataset + "/" + local;
  }

  std::string image_uri(std::size_t row) const { return trim(table_.at(row, schema_.image_column)); }

  ModalityTag modality(std::size_t row) const {
    if (schema_.modality_column) {
      const auto& raw = table_.at(row, *schema_.modality_column);
      auto tag = parse_modality(raw);
      if (!tag) {
        throw Error(kModule, op_, "row " + std::to_string(row + 1) + ": unknown modality '" + raw + "'");
      }
      return *tag;
    }
    return *schema_.modality;
  }

  std::string modality_text(std::size_t row) const {
    if (schema_.modality_name) return *schema_.modality_name;
    return std::string(display_name(modality(row)));
  }

  std::optional<std::string> anatomy(std::size_t row) const {
    if (!schema_.anatomy_column) return std::nullopt;
    auto a = trim(table_.at(row, *schema_.anatomy_column));
    if (a.empty()) return std::nullopt;
    return a;
  }

 private:
  const CsvTable& table_;
  const SchemaMap& schema_;
  const char* op_;
};

void require_rows(const IngestResult& result, const char* op) {
  if (result.records.empty()) throw Error(kModule, op, "zero usable rows");
}

}  // namespace

std::string_view to_string(SourceKind kind) noexcept {
  switch (kind) {
    case SourceKind::label_only: return "label_only";
    case SourceKind::image_text: return "image_text";
    case SourceKind::multilabel: return "multilabel";
  }
  return "label_only";
}

std::optional<SourceKind> parse_source_kind(std::string_view text) {
  if (text == "label_only") return SourceKind::label_only;
  if (text == "image_text") return SourceKind::image_text;
  if (text == "multilabel") return SourceKind::multilabel;
  return std::nullopt;
}

void validate_schema(const CsvTable& table, const SchemaMap& schema, SourceKind kind) {
  std::vector<std::string> needed{schema.image_column};
  if (schema.id_column) needed.push_back(*schema.id_column);
  if (schema.modality_column) needed.push_back(*schema.modality_column);
  if (schema.anatomy_column) needed.push_back(*schema.anatomy_column);
  switch (kind) {
    case SourceKind::label_only:
      if (!schema.label_column) throw Error(kModule, "validate_schema", "label_only source needs label_column");
      needed.push_back(*schema.label_column);
      break;
    case SourceKind::image_text:
      if (!schema.caption_column) throw Error(kModule, "validate_schema", "image_text source needs caption_column");
      needed.push_back(*schema.caption_column);
      break;
    case SourceKind::multilabel:
      if (schema.indicator_columns.empty()) {
        throw Error(kModule, "validate_schema", "multilabel source needs indicator_columns");
      }
      needed.insert(needed.end(), schema.indicator_columns.begin(), schema.indicator_columns.end());
      break;
  }
  if (schema.source_dataset.empty()) throw Error(kModule, "validate_schema", "source_dataset is empty");
  if (!schema.modality && !schema.modality_column) {
    throw Error(kModule, "validate_schema", "schema needs a fixed modality or a modality_column");
  }
  std::string missing;
  for (const auto& c : needed) {
    if (!table.has_column(c)) missing += (missing.empty() ? "" : ", ") + c;
  }
  if (!missing.empty()) throw Error(kModule, "validate_schema", "missing columns: " + missing);
}

IngestResult ingest_label_only(const CsvTable& table, const SchemaMap& schema) {
  validate_schema(table, schema, SourceKind::label_only);
  RowReader reader(table, schema, "ingest_label_only");
  IngestResult result;
  TripletCollector triplets;
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    auto label = trim(table.at(row, *schema.label_column));
    if (label.empty()) {
      result.skipped_rows.push_back(row + 1);
      continue;
    }
    LabelInfoTriplet triplet(label, reader.modality_text(row), reader.anatomy(row));
    triplets.add(triplet);
    result.records.push_back(SampleRecord{reader.record_id(row), reader.image_uri(row), schema.source_dataset,
                                          reader.modality(row), BankRef{triplet.key()}});
  }
  require_rows(result, "ingest_label_only");
  result.triplets = std::move(triplets.triplets);
  return result;
}

IngestResult ingest_image_text(const CsvTable& table, const SchemaMap& schema) {
  validate_schema(table, schema, SourceKind::image_text);
  RowReader reader(table, schema, "ingest_image_text");
  IngestResult result;
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    auto caption = collapse_whitespace(table.at(row, *schema.caption_column));
    if (caption.empty()) {
      result.skipped_rows.push_back(row + 1);
      continue;
    }
    result.records.push_back(SampleRecord{reader.record_id(row), reader.image_uri(row), schema.source_dataset,
                                          reader.modality(row), InlineCaption{std::move(caption)}});
  }
  require_rows(result, "ingest_image_text");
  return result;
}

std::vector<LabeledRecord> expand_multilabel(const CsvTable& table, std::size_t row, const SchemaMap& schema) {
  RowReader reader(table, schema, "expand_multilabel");
  std::vector<std::string> positives;
  for (const auto& column : schema.indicator_columns) {
    auto v = trim(table.at(row, column));
    if (v == "1" || v == "1.0") {
      positives.push_back(column);
    } else if (v != "0" && v != "0.0") {
      throw Error(kModule, "expand_multilabel",
                  "row " + std::to_string(row + 1) + ", column '" + column + "': non-binary value '" + v + "'");
    }
  }
  if (positives.empty()) positives.emplace_back("no finding");

  std::vector<LabeledRecord> out;
  const auto base_id = reader.record_id(row);
  for (const auto& label : positives) {
    LabelInfoTriplet triplet(label, reader.modality_text(row), reader.anatomy(row));
    SampleRecord record{base_id + ":" + to_lower(label), reader.image_uri(row), schema.source_dataset,
                        reader.modality(row), BankRef{triplet.key()}};
    out.push_back(LabeledRecord{std::move(record), std::move(triplet)});
  }
  return out;
}

IngestResult ingest_multilabel(const CsvTable& table, const SchemaMap& schema) {
  validate_schema(table, schema, SourceKind::multilabel);
  IngestResult result;
  TripletCollector triplets;
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    if (trim(table.at(row, schema.image_column)).empty()) {
      result.skipped_rows.push_back(row + 1);
      continue;
    }
    for (auto& lr : expand_multilabel(table, row, schema)) {
      triplets.add(lr.triplet);
      result.records.push_back(std::move(lr.record));
    }
  }
  require_rows(result, "ingest_multilabel");
  result.triplets = std::move(triplets.triplets);
  return result;
}

IngestResult ingest(const CsvTable& table, const SchemaMap& schema, SourceKind kind) {
  switch (kind) {
    case SourceKind::label_only: return ingest_label_only(table, schema);
    case SourceKind::image_text: return ingest_image_text(table, schema);
    case SourceKind::multilabel: return ingest_multilabel(table, schema);
  }
  throw Error(kModule, "ingest", "unknown source kind");
}

DedupResult dedup_and_validate(std::vector<SampleRecord> records) {
  DedupResult result;
  std::unordered_set<std::string> seen_content;
  std::unordered_map<std::string, std::size_t> seen_ids;
  for (auto& r : records) {
    if (auto why = record_violation(r)) {
      result.report.rejected.emplace_back(r.record_id, *why);
      continue;
    }
    std::string content = r.image_uri;
    content.push_back('\x1f');
    if (const auto* c = std::get_if<InlineCaption>(&r.payload)) {
      content += "inline";
      content.push_back('\x1f');
      content += c->caption;
    } else {
      content += "bank";
      content.push_back('\x1f');
      content += std::get<BankRef>(r.payload).triplet_key;
    }
    if (!seen_content.insert(content).second) {
      result.report.dropped.push_back(r.record_id);
      continue;
    }
    if (seen_ids.count(r.record_id)) {
      seen_content.erase(content);
      result.report.rejected.emplace_back(r.record_id, "record_id reused with different content");
      continue;
    }
    seen_ids.emplace(r.record_id, result.kept.size());
    result.kept.push_back(std::move(r));
  }
  return result;
}

}  // namespace forge
