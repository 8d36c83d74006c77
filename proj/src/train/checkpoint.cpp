// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Layout: "FORGECKPT1\n", one line of compact JSON header, then the binary
// payload. The header records the payload size and its sha256.
//
// Payload (little-endian): [u64 n][n f64] vision params, text params, adam m,
// adam v; f64 log temperature; i64 step; [u64 n][n bytes] rng state.

#include <algorithm>
#include <bit>
#include <cstring>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"
#include "forge/trainer.hpp"

namespace forge {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr const char* kModule = "trainer";
constexpr std::string_view kMagic = "FORGECKPT1\n";

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, std::span<const double> values) {
  put<std::uint64_t>(out, values.size());
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (data_.size() - pos_) / sizeof(double)) fail();
    std::vector<double> values(n);
    std::memcpy(values.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return values;
  }

  std::string get_bytes() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) fail();
  }
  [[noreturn]] static void fail() { throw IntegrityError(kModule, "load_checkpoint", "payload is malformed"); }

  std::string_view data_;
  std::size_t pos_ = 0;
};

void copy_params(std::span<double> dst, const std::vector<double>& src, const char* which) {
  if (dst.size() != src.size()) {
    throw IntegrityError(kModule, "load_checkpoint",
                         std::string(which) + " parameter count " + std::to_string(src.size()) +
                             " does not match the encoder description");
  }
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

bool TrainerState::operator==(const TrainerState& other) const {
  auto same = [](std::span<const double> a, std::span<const double> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  };
  return encoders.describe() == other.encoders.describe() &&
         same(encoders.vision().parameters(), other.encoders.vision().parameters()) &&
         same(encoders.text().parameters(), other.encoders.text().parameters()) &&
         log_temperature == other.log_temperature && adam_m == other.adam_m && adam_v == other.adam_v &&
         step == other.step && config_hash == other.config_hash && rng_state == other.rng_state;
}

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
  std::string payload;
  put_doubles(payload, state.encoders.vision().parameters());
  put_doubles(payload, state.encoders.text().parameters());
  put_doubles(payload, state.adam_m);
  put_doubles(payload, state.adam_v);
  put<double>(payload, state.log_temperature);
  put<std::int64_t>(payload, state.step);
  put<std::uint64_t>(payload, state.rng_state.size());
  payload += state.rng_state;

  nlohmann::ordered_json header = {{"format", 1},
                                   {"step", state.step},
                                   {"config_hash", state.config_hash},
                                   {"encoders", state.encoders.describe()},
                                   {"payload_bytes", payload.size()},
                                   {"checksum", sha256_hex(payload)}};
  std::string blob(kMagic);
  blob += header.dump();
  blob.push_back('\n');
  blob += payload;
  write_file_atomic(path, blob, kModule, "save_checkpoint");
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  const std::string blob = read_file(path, kModule, "load_checkpoint");
  auto corrupt = [&](const std::string& why) {
    throw IntegrityError(kModule, "load_checkpoint", path.string() + ": " + why);
  };
  if (blob.compare(0, kMagic.size(), kMagic) != 0) corrupt("not a checkpoint (bad magic)");
  const auto eol = blob.find('\n', kMagic.size());
  if (eol == std::string::npos) corrupt("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.begin() + static_cast<std::ptrdiff_t>(kMagic.size()),
                                   blob.begin() + static_cast<std::ptrdiff_t>(eol));
  } catch (const nlohmann::json::exception&) {
    corrupt("header is not valid JSON");
  }
  std::string_view payload(blob.data() + eol + 1, blob.size() - eol - 1);
  std::uint64_t payload_bytes = 0;
  std::string checksum, config_hash;
  std::int64_t header_step = 0;
  try {
    payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
    checksum = header.at("checksum").get<std::string>();
    config_hash = header.at("config_hash").get<std::string>();
    header_step = header.at("step").get<std::int64_t>();
    if (header.at("format") != 1) corrupt("unsupported format");
  } catch (const nlohmann::json::exception&) {
    corrupt("header is missing fields");
  }
  if (payload.size() != payload_bytes) {
    corrupt("payload is " + std::to_string(payload.size()) + " bytes, header says " + std::to_string(payload_bytes) +
            " (truncated?)");
  }
  if (sha256_hex(payload) != checksum) corrupt("checksum mismatch");

  TrainerState state{make_encoders(header.at("encoders")), 0.0, {}, {}, 0, config_hash, {}};
  Reader r(payload);
  copy_params(state.encoders.vision().parameters(), r.get_doubles(), "vision");
  copy_params(state.encoders.text().parameters(), r.get_doubles(), "text");
  state.adam_m = r.get_doubles();
  state.adam_v = r.get_doubles();
  state.log_temperature = r.get<double>();
  state.step = r.get<std::int64_t>();
  state.rng_state = r.get_bytes();
  if (!r.done()) corrupt("trailing payload bytes");
  if (state.step != header_step) corrupt("header step disagrees with payload");
  return state;
}

}  // namespace forge
