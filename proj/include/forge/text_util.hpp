// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Collapses every run of whitespace to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

/// Number of whitespace-separated words.
std::size_t word_count(std::string_view s);

std::vector<std::string> split(std::string_view s, char delim);

/// Case-insensitive substring test (ASCII folding).
bool contains_icase(std::string_view haystack, std::string_view needle);

/// Replaces every "{}" in `pattern` with `value`.
std::string fill_placeholder(std::string_view pattern, std::string_view value);

/// Reads a whole file as bytes; throws forge::Error on failure.
std::string read_file(const std::string& path, const std::string& module, const std::string& operation);

/// Writes bytes to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view bytes, const std::string& module,
                       const std::string& operation);

}  // namespace forge
