// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/text_util.hpp"

namespace forge {

std::string_view default_style_directives() noexcept {
  return "Write as an experienced clinician would in the figure legend of a peer-reviewed article or in the "
         "findings section of a report. Use correct biomedical terminology and standard clinical nomenclature. "
         "Every caption must name the disease/category explicitly and stay consistent with the modality and "
         "organ given above. Do not add findings that contradict the category, do not mention patient "
         "identifiers, and do not say that the caption was generated.";
}

std::string build_prompt(const PromptSpec& spec) {
  if (spec.captions < 1) throw Error("caption_factory", "build_prompt", "caption count must be >= 1");
  const auto& t = spec.triplet;
  std::string p = "Generate a caption for a medical image containing the following information:\n";
  p += "Disease/Category Name: " + t.category_label() + ",\n";
  p += "Modality Name: " + t.modality();
  if (t.anatomy()) p += ",\nOrgan Name: " + *t.anatomy();
  p += "\n\n";
  if (!spec.style_directives.empty()) p += spec.style_directives + "\n\n";
  const auto m = std::to_string(spec.captions);
  p += "Produce " + m + " different captions for this image in diverse tones and styles, each written in a "
       "medical professional style with professional medical nomenclature. Return exactly " + m +
       " captions as a numbered list, one per line, formatted \"1. <caption>\" through \"" + m +
       ". <caption>\", with no other text.\n";
  return p;
}

namespace {

// "12. text" or "12) text" -> (12, "text").
std::optional<std::pair<int, std::string>> numbered_item(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  std::size_t digits_start = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == digits_start || i - digits_start > 4 || i >= line.size()) return std::nullopt;
  if (line[i] != '.' && line[i] != ')') return std::nullopt;
  int number = std::stoi(std::string(line.substr(digits_start, i - digits_start)));
  auto text = trim(line.substr(i + 1));
  // Strip one layer of wrapping quotes or bold markers.
  for (std::string_view wrap : {"\"", "**"}) {
    if (text.size() >= 2 * wrap.size() && text.compare(0, wrap.size(), wrap) == 0 &&
        text.compare(text.size() - wrap.size(), wrap.size(), wrap) == 0) {
      text = trim(text.substr(wrap.size(), text.size() - 2 * wrap.size()));
    }
  }
  if (text.empty()) return std::nullopt;
  return std::make_pair(number, collapse_whitespace(text));
}

}  // namespace

std::vector<std::string> parse_numbered_list(std::string_view response) {
  std::vector<std::string> items;
  for (const auto& line : split(response, '\n')) {
    auto item = numbered_item(line);
    if (item && item->first == static_cast<int>(items.size()) + 1) items.push_back(std::move(item->second));
  }
  return items;
}

}  // namespace forge
