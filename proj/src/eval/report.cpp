// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

#include "forge/eval.hpp"

namespace forge {

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

ModalityReport modality_report(std::span<const EvalResult> results) {
  ModalityReport report;
  report.results.assign(results.begin(), results.end());
  std::map<ModalityTag, double> sums;
  double total = 0.0;
  for (const auto& r : results) {
    sums[r.modality] += r.value;
    ++report.modality_datasets[r.modality];
    total += r.value;
  }
  for (const auto& [tag, sum] : sums) {
    report.modality_mean[tag] = sum / static_cast<double>(report.modality_datasets[tag]);
  }
  if (!results.empty()) report.grand_mean = total / static_cast<double>(results.size());
  return report;
}

nlohmann::ordered_json ModalityReport::to_json() const {
  nlohmann::ordered_json modalities = nlohmann::ordered_json::object();
  for (const auto& [tag, mean] : modality_mean) {
    modalities[std::string(to_string(tag))] = {{"mean", mean}, {"datasets", modality_datasets.at(tag)}};
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : results) rows.push_back(r.to_json());
  nlohmann::ordered_json grand = nullptr;
  if (grand_mean) grand = *grand_mean;
  return {{"results", rows}, {"modality_mean", modalities}, {"grand_mean", grand}};
}

std::string ModalityReport::to_markdown() const {
  std::string md = "| Dataset | Modality | Protocol | Fraction | Metric | Value | n |\n";
  md += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : results) {
    md += "| " + r.dataset + " | " + std::string(to_string(r.modality)) + " | " + r.protocol + " | " +
          (r.fraction ? fixed2(*r.fraction) : std::string("-")) + " | " + std::string(to_string(r.metric)) + " | " +
          fixed2(r.value) + " | " + std::to_string(r.n) + " |\n";
  }
  md += "\n| Modality | Datasets | Mean |\n|---|---|---|\n";
  for (const auto& [tag, mean] : modality_mean) {
    md += "| " + std::string(to_string(tag)) + " | " + std::to_string(modality_datasets.at(tag)) + " | " +
          fixed2(mean) + " |\n";
  }
  md += "\nGrand mean over datasets: " + (grand_mean ? fixed2(*grand_mean) : std::string("n/a")) + "\n";
  return md;
}

}  // namespace forge
