// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/csv.hpp"

#include "forge/error.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

// Splits CSV text into records of fields. Tracks the physical line each record
// starts on so errors can point at it.
std::vector<std::pair<std::size_t, std::vector<std::string>>> tokenize(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = fields.size() == 1 && fields[0].empty();
    if (!blank) records.emplace_back(record_line, std::move(fields));
    fields.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw ParseError("ingestors", "csv", line, "stray quote inside unquoted field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError("ingestors", "csv", record_line, "unterminated quoted field");
  if (field_started || !fields.empty()) end_record();
  return records;
}

bool needs_quotes(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos || (!s.empty() && (s.front() == ' ' || s.back() == ' '));
}

void append_field(std::string& out, const std::string& s) {
  if (!needs_quotes(s)) {
    out += s;
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable CsvTable::parse(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  auto records = tokenize(text);
  if (records.empty()) throw ParseError("ingestors", "csv", 1, "missing header row");
  CsvTable table;
  for (auto& name : records.front().second) table.columns_.push_back(trim(name));
  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& [line, fields] = records[r];
    if (fields.size() != table.columns_.size()) {
      throw ParseError("ingestors", "csv", line,
                       "expected " + std::to_string(table.columns_.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    table.rows_.push_back(std::move(fields));
  }
  return table;
}

CsvTable CsvTable::load(const std::string& path) {
  return parse(read_file(path, "ingestors", "csv"));
}

std::string CsvTable::to_string() const {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      append_field(out, fields[i]);
    }
    out.push_back('\n');
  };
  emit(columns_);
  for (const auto& row : rows_) emit(row);
  return out;
}

void CsvTable::save(const std::string& path) const {
  write_file_atomic(path, to_string(), "ingestors", "csv");
}

std::optional<std::size_t> CsvTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return i;
  }
  return std::nullopt;
}

const std::string& CsvTable::at(std::size_t r, std::string_view name) const {
  auto idx = column_index(name);
  if (!idx) throw Error("ingestors", "csv", "missing column '" + std::string(name) + "'");
  return rows_.at(r).at(*idx);
}

void CsvTable::add_row(std::vector<std::string> fields) {
  if (fields.size() != columns_.size()) {
    throw Error("ingestors", "csv", "row has " + std::to_string(fields.size()) + " fields, table has " +
                                        std::to_string(columns_.size()) + " columns");
  }
  rows_.push_back(std::move(fields));
}

}  // namespace forge
