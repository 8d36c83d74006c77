// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <unordered_set>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/manifest.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kModule = "manifest_core";

std::string dump_line(const ojson& j, const char* op) {
  try {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, op, std::string("cannot encode JSON: ") + e.what());
  }
}

ojson record_to_json(const SampleRecord& r) {
  ojson payload;
  if (const auto* c = std::get_if<InlineCaption>(&r.payload)) {
    payload["kind"] = "inline";
    payload["caption"] = c->caption;
  } else {
    payload["kind"] = "bank";
    payload["triplet_key"] = std::get<BankRef>(r.payload).triplet_key;
  }
  ojson j;
  j["record_id"] = r.record_id;
  j["image_uri"] = r.image_uri;
  j["source_dataset"] = r.source_dataset;
  j["modality"] = std::string(to_string(r.modality));
  j["payload"] = std::move(payload);
  return j;
}

void require_exact_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, std::size_t line,
                        const char* what) {
  if (!j.is_object()) throw ParseError(kModule, "read_manifest", line, std::string(what) + " is not an object");
  if (j.size() != keys.size()) {
    throw ParseError(kModule, "read_manifest", line, std::string(what) + " has unexpected fields");
  }
  for (const char* k : keys) {
    if (!j.contains(k)) throw ParseError(kModule, "read_manifest", line, std::string(what) + " lacks '" + k + "'");
  }
}

std::string string_field(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ParseError(kModule, "read_manifest", line, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

SampleRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  require_exact_keys(j, {"record_id", "image_uri", "source_dataset", "modality", "payload"}, line, "record");
  SampleRecord r;
  r.record_id = string_field(j, "record_id", line);
  r.image_uri = string_field(j, "image_uri", line);
  r.source_dataset = string_field(j, "source_dataset", line);
  auto modality = string_field(j, "modality", line);
  auto tag = parse_modality(modality);
  if (!tag || to_string(*tag) != modality) {
    throw ParseError(kModule, "read_manifest", line, "unknown modality '" + modality + "'");
  }
  r.modality = *tag;
  const auto& p = j.at("payload");
  if (!p.is_object() || !p.contains("kind")) throw ParseError(kModule, "read_manifest", line, "payload lacks 'kind'");
  auto kind = string_field(p, "kind", line);
  if (kind == "inline") {
    require_exact_keys(p, {"kind", "caption"}, line, "payload");
    r.payload = InlineCaption{string_field(p, "caption", line)};
  } else if (kind == "bank") {
    require_exact_keys(p, {"kind", "triplet_key"}, line, "payload");
    r.payload = BankRef{string_field(p, "triplet_key", line)};
  } else {
    throw ParseError(kModule, "read_manifest", line, "unknown payload kind '" + kind + "'");
  }
  if (auto why = record_violation(r)) throw ParseError(kModule, "read_manifest", line, *why);
  return r;
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string body;
  for (const auto& r : manifest.records()) {
    body += dump_line(record_to_json(r), "write_manifest");
    body.push_back('\n');
  }
  ojson counts;
  for (auto tag : kAllModalities) counts[std::string(to_string(tag))] = manifest.count(tag);
  ojson header;
  header["version"] = manifest.version();
  header["counts"] = std::move(counts);
  header["checksum"] = sha256_hex(body);
  return dump_line(header, "write_manifest") + "\n" + body;
}

DatasetManifest parse_manifest(std::string_view text) {
  auto header_end = text.find('\n');
  if (header_end == std::string_view::npos) {
    throw ParseError(kModule, "read_manifest", 1, "missing header line terminator");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.substr(0, header_end));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(kModule, "read_manifest", 1, std::string("malformed header: ") + e.what());
  }
  require_exact_keys(header, {"version", "counts", "checksum"}, 1, "header");
  if (!header.at("version").is_number_integer()) throw ParseError(kModule, "read_manifest", 1, "version must be an integer");
  int version = header.at("version").get<int>();
  if (version != DatasetManifest::kVersion) {
    throw ParseError(kModule, "read_manifest", 1, "unsupported manifest version " + std::to_string(version));
  }
  const auto& counts = header.at("counts");
  if (!counts.is_object()) throw ParseError(kModule, "read_manifest", 1, "counts must be an object");
  std::map<ModalityTag, std::size_t> claimed;
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    auto tag = parse_modality(it.key());
    if (!tag || to_string(*tag) != it.key()) throw ParseError(kModule, "read_manifest", 1, "unknown modality '" + it.key() + "'");
    if (!it.value().is_number_unsigned()) throw ParseError(kModule, "read_manifest", 1, "count for " + it.key() + " is not a non-negative integer");
    claimed[*tag] = it.value().get<std::size_t>();
  }

  std::string_view body = text.substr(header_end + 1);
  std::vector<SampleRecord> records;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 1;
  std::size_t pos = 0;
  while (pos < body.size()) {
    ++line_no;
    auto end = body.find('\n', pos);
    if (end == std::string_view::npos) throw IntegrityError(kModule, "read_manifest", "line " + std::to_string(line_no) + ": truncated record (no line terminator)");
    auto line = body.substr(pos, end - pos);
    pos = end + 1;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(kModule, "read_manifest", line_no, std::string("malformed record: ") + e.what());
    }
    auto record = record_from_json(j, line_no);
    if (!ids.insert(record.record_id).second) {
      throw ParseError(kModule, "read_manifest", line_no, "duplicate record_id '" + record.record_id + "'");
    }
    records.push_back(std::move(record));
  }

  DatasetManifest manifest(std::move(records), version);
  std::size_t claimed_total = 0;
  for (auto tag : kAllModalities) {
    std::size_t c = claimed.count(tag) ? claimed[tag] : 0;
    claimed_total += c;
    if (c != manifest.count(tag)) {
      throw IntegrityError(kModule, "read_manifest",
                           "header claims " + std::to_string(c) + " " + std::string(to_string(tag)) +
                               " records, found " + std::to_string(manifest.count(tag)));
    }
  }
  if (claimed_total != manifest.size()) {
    throw IntegrityError(kModule, "read_manifest", "header claims " + std::to_string(claimed_total) +
                                                      " records, found " + std::to_string(manifest.size()));
  }
  const auto& checksum = header.at("checksum");
  if (!checksum.is_string() || checksum.get<std::string>() != sha256_hex(body)) {
    throw IntegrityError(kModule, "read_manifest", "checksum mismatch");
  }
  return manifest;
}

std::filesystem::path write_manifest(const DatasetManifest& manifest, const std::filesystem::path& destination) {
  auto parent = destination.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw Error(kModule, "write_manifest", "destination directory '" + parent.string() + "' does not exist");
  }
  write_file_atomic(destination.string(), serialize_manifest(manifest), kModule, "write_manifest");
  return destination;
}

DatasetManifest read_manifest(const std::filesystem::path& source) {
  return parse_manifest(read_file(source.string(), kModule, "read_manifest"));
}

}  // namespace forge
