// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// In-memory CSV table with a header row. Quoted fields (RFC 4180) are
/// supported on read and emitted on write when needed.
class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> columns);

  static CsvTable parse(std::string_view text);
  static CsvTable load(const std::string& path);

  std::string to_string() const;
  void save(const std::string& path) const;

  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::size_t row_count() const noexcept { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }

  std::optional<std::size_t> column_index(std::string_view name) const;
  bool has_column(std::string_view name) const { return column_index(name).has_value(); }

  /// Field of row `r` in column `name`; throws if the column is missing.
  const std::string& at(std::size_t r, std::string_view name) const;

  void add_row(std::vector<std::string> fields);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace forge
