// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/manifest.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

using ojson = nlohmann::ordered_json;
constexpr const char* kModule = "manifest_core";

std::string strict_dump(const ojson& j) {
  try {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "write_caption_bank", std::string("cannot encode JSON: ") + e.what());
  }
}

ojson entries_json(const CaptionBank::Entries& entries) {
  ojson j = ojson::object();
  for (const auto& [key, captions] : entries) j[key] = captions;
  return j;
}

// Covers every field except the checksum itself.
std::string bank_checksum(const std::string& generator, const std::string& created, int m, const ojson& entries) {
  ojson covered;
  covered["generator"] = generator;
  covered["created"] = created;
  covered["M"] = m;
  covered["entries"] = entries;
  return sha256_hex(strict_dump(covered));
}

}  // namespace

std::string serialize_caption_bank(const CaptionBank& bank) {
  auto entries = entries_json(bank.entries());
  ojson meta;
  meta["generator"] = bank.metadata().generator;
  meta["created"] = bank.metadata().created;
  meta["M"] = bank.metadata().captions_per_key;
  meta["checksum"] =
      bank_checksum(bank.metadata().generator, bank.metadata().created, bank.metadata().captions_per_key, entries);
  ojson doc;
  doc["metadata"] = std::move(meta);
  doc["entries"] = std::move(entries);
  return strict_dump(doc) + "\n";
}

CaptionBank parse_caption_bank(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, "read_caption_bank", 0, std::string("malformed caption bank: ") + e.what());
  }
  auto fail = [](const std::string& msg) { throw ParseError(kModule, "read_caption_bank", 0, msg); };
  if (!doc.is_object() || doc.size() != 2 || !doc.contains("metadata") || !doc.contains("entries")) {
    fail("expected exactly 'metadata' and 'entries'");
  }
  const auto& meta = doc.at("metadata");
  if (!meta.is_object() || meta.size() != 4 || !meta.contains("generator") || !meta.contains("created") ||
      !meta.contains("M") || !meta.contains("checksum")) {
    fail("metadata must hold exactly generator, created, M, checksum");
  }
  if (!meta.at("generator").is_string() || !meta.at("created").is_string() || !meta.at("M").is_number_integer() ||
      !meta.at("checksum").is_string()) {
    fail("metadata field has the wrong type");
  }
  const auto& entries = doc.at("entries");
  if (!entries.is_object()) fail("entries must be an object");
  CaptionBank::Entries parsed;
  for (auto it = entries.begin(); it != entries.end(); ++it) {
    if (!it.value().is_array()) fail("entry '" + it.key() + "' is not a list");
    std::vector<std::string> captions;
    for (const auto& c : it.value()) {
      if (!c.is_string()) fail("entry '" + it.key() + "' holds a non-string caption");
      captions.push_back(c.get<std::string>());
    }
    parsed.emplace(it.key(), std::move(captions));
  }
  if (bank_checksum(meta.at("generator").get<std::string>(), meta.at("created").get<std::string>(),
                    meta.at("M").get<int>(), entries_json(parsed)) != meta.at("checksum").get<std::string>()) {
    throw IntegrityError(kModule, "read_caption_bank", "checksum mismatch");
  }
  CaptionBank bank(CaptionBankMetadata{meta.at("generator").get<std::string>(), meta.at("created").get<std::string>(),
                                       meta.at("M").get<int>()},
                   std::move(parsed));
  if (serialize_caption_bank(bank) != text) {
    throw IntegrityError(kModule, "read_caption_bank", "file is not in canonical encoding");
  }
  return bank;
}

void write_caption_bank(const CaptionBank& bank, const std::filesystem::path& destination) {
  auto parent = destination.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw Error(kModule, "write_caption_bank", "destination directory '" + parent.string() + "' does not exist");
  }
  write_file_atomic(destination.string(), serialize_caption_bank(bank), kModule, "write_caption_bank");
}

CaptionBank read_caption_bank(const std::filesystem::path& source) {
  return parse_caption_bank(read_file(source.string(), kModule, "read_caption_bank"));
}

}  // namespace forge
