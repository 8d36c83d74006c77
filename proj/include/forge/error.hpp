// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forge {

/// Base error for every failure raised by the toolkit. Carries the module and
/// operation that failed so the CLI can print a structured summary.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string operation, const std::string& message)
      : std::runtime_error(message),
        module_(std::move(module)),
        operation_(std::move(operation)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string module_;
  std::string operation_;
};

/// Malformed input at a known line (1-based; 0 when not line-oriented).
class ParseError : public Error {
 public:
  ParseError(std::string module, std::string operation, std::size_t line, const std::string& message)
      : Error(std::move(module), std::move(operation),
              line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Stored data disagrees with itself (checksum, header counts, truncation).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration; the CLI maps this to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
