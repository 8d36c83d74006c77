// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/error.hpp"
#include "forge/trainer.hpp"

namespace forge {

std::string sample_caption(const SampleRecord& record, const CaptionBank* bank, Rng& rng) {
  if (const auto* inline_caption = std::get_if<InlineCaption>(&record.payload)) return inline_caption->caption;
  const auto& key = std::get<BankRef>(record.payload).triplet_key;
  const std::vector<std::string>* captions = bank ? bank->find(key) : nullptr;
  if (!captions) {
    throw Error("trainer", "sample_caption", "record '" + record.record_id + "': unresolvable triplet key '" + key + "'");
  }
  std::uniform_int_distribution<std::size_t> pick(0, captions->size() - 1);
  return (*captions)[pick(rng)];
}

}  // namespace forge
