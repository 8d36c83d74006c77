// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <random>
#include <unordered_set>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/hashing.hpp"

namespace forge {

namespace {

// Placeholders: {m} modality, {M} capitalized modality, {n} noun, {v} verb,
// {l} label, {in} " in the <anatomy>", {of} " of the <anatomy>". The fixed
// words differ between skeletons, so expansions never collide.
constexpr std::array<std::string_view, 8> kSkeletons = {
    "A medical {m} {n} {v} {l}{in}.",
    "{M} {n} {v} {l}{in}.",
    "Representative {m} {n} {v} {l}{in}.",
    "{M} {n}{of} {v} findings of {l}.",
    "Clinical {m} {n} {v} {l}{in}.",
    "A {m} {n}{of} {v} typical features of {l}.",
    "Diagnostic {m} {n} {v} {l}{in}.",
    "{M} {n} from a patient, {v} {l}{in}.",
};
constexpr std::array<std::string_view, 3> kNouns = {"image", "scan", "study"};
constexpr std::array<std::string_view, 3> kVerbs = {"showing", "demonstrating", "consistent with"};

std::string expand(std::size_t combo, const LabelInfoTriplet& t) {
  const auto skeleton = kSkeletons[combo / (kNouns.size() * kVerbs.size())];
  const auto noun = kNouns[(combo / kVerbs.size()) % kNouns.size()];
  const auto verb = kVerbs[combo % kVerbs.size()];
  std::string modality_cap = t.modality();
  if (!modality_cap.empty()) modality_cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(modality_cap[0])));
  const std::string in_anatomy = t.anatomy() ? " in the " + *t.anatomy() : "";
  const std::string of_anatomy = t.anatomy() ? " of the " + *t.anatomy() : "";

  std::string out;
  for (std::size_t i = 0; i < skeleton.size();) {
    if (skeleton[i] != '{') {
      out.push_back(skeleton[i++]);
      continue;
    }
    auto close = skeleton.find('}', i);
    auto slot = skeleton.substr(i + 1, close - i - 1);
    if (slot == "m") out += t.modality();
    else if (slot == "M") out += modality_cap;
    else if (slot == "n") out += noun;
    else if (slot == "v") out += verb;
    else if (slot == "l") out += t.category_label();
    else if (slot == "in") out += in_anatomy;
    else if (slot == "of") out += of_anatomy;
    i = close + 1;
  }
  return out;
}

}  // namespace

std::size_t offline_grammar_capacity() noexcept { return kSkeletons.size() * kNouns.size() * kVerbs.size(); }

CaptionBank offline_caption_bank(std::span<const LabelInfoTriplet> triplets, int captions_per_key, std::uint64_t seed) {
  if (captions_per_key < 1) throw Error("caption_factory", "offline_caption_bank", "captions_per_key must be >= 1");
  const auto capacity = offline_grammar_capacity();
  if (static_cast<std::size_t>(captions_per_key) > capacity) {
    throw Error("caption_factory", "offline_caption_bank",
                "requested " + std::to_string(captions_per_key) + " captions per key but the grammar capacity is " +
                    std::to_string(capacity));
  }
  CaptionBank::Entries entries;
  for (const auto& t : triplets) {
    if (entries.count(t.key())) continue;
    std::vector<std::size_t> rest(capacity - 1);
    std::iota(rest.begin(), rest.end(), std::size_t{1});
    std::mt19937_64 rng(derive_seed(seed, fnv1a64(t.key())));
    std::vector<std::string> captions{expand(0, t)};
    // Partial Fisher-Yates: only the first M-1 positions are needed.
    for (std::size_t i = 0; i + 1 < static_cast<std::size_t>(captions_per_key); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
      std::swap(rest[i], rest[pick(rng)]);
      captions.push_back(expand(rest[i], t));
    }
    entries.emplace(t.key(), std::move(captions));
  }
  return CaptionBank(CaptionBankMetadata{"offline-grammar-v1", "1970-01-01T00:00:00Z", captions_per_key},
                     std::move(entries));
}

}  // namespace forge
