// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "evaluator";

DatasetEntry parse_entry(const nlohmann::json& j, const std::filesystem::path& base, std::size_t index) {
  const std::string where = "registry entry " + std::to_string(index);
  auto fail = [&](const std::string& msg) { throw ConfigError(kModule, "load_registry", where + ": " + msg); };
  if (!j.is_object()) fail("not an object");
  static const std::set<std::string> kAllowed = {"name",           "modality",        "metric",   "classes",
                                                 "test_split_uri", "train_split_uri", "templates"};
  for (const auto& [key, _] : j.items()) {
    if (!kAllowed.count(key)) fail("unknown key '" + key + "'");
  }
  DatasetEntry e;
  try {
    e.name = j.at("name").get<std::string>();
    const auto modality = parse_modality(j.at("modality").get<std::string>());
    if (!modality) fail("unknown modality " + j.at("modality").dump());
    e.modality = *modality;
    const auto metric = parse_metric(j.at("metric").get<std::string>());
    if (!metric) fail("metric must be ACC or AUC");
    e.metric = *metric;
    e.classes = j.at("classes").get<std::vector<std::string>>();
    e.test_split = base / j.at("test_split_uri").get<std::string>();
    if (j.contains("train_split_uri") && !j.at("train_split_uri").is_null()) {
      e.train_split = base / j.at("train_split_uri").get<std::string>();
    }
    if (j.contains("templates")) e.templates = j.at("templates").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    fail(ex.what());
  }
  if (e.name.empty()) fail("empty name");
  if (e.classes.empty()) fail("no classes");
  if (e.metric == Metric::AUC && e.classes.size() != 2) fail("AUC datasets need exactly two classes");
  if (e.templates.empty()) e.templates = default_templates(e.modality);
  return e;
}

}  // namespace

std::vector<std::string> default_templates(ModalityTag modality) {
  return {"A medical " + std::string(display_name(modality)) + " image showing {}."};
}

std::vector<DatasetEntry> load_registry(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path, kModule, "load_registry"));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(kModule, "load_registry", path.string() + ": " + ex.what());
  }
  if (!doc.is_array()) throw ConfigError(kModule, "load_registry", "registry must be a JSON array");
  std::vector<DatasetEntry> entries;
  std::set<std::string> names;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    entries.push_back(parse_entry(doc[i], path.parent_path(), i));
    if (!names.insert(entries.back().name).second) {
      throw ConfigError(kModule, "load_registry", "duplicate dataset name '" + entries.back().name + "'");
    }
  }
  return entries;
}

LabeledSplit load_split(const std::filesystem::path& path, std::span<const std::string> classes) {
  const auto table = CsvTable::load(path);
  if (!table.has_column("image_uri") || !table.has_column("label")) {
    throw Error(kModule, "load_split", path.string() + ": needs image_uri and label columns");
  }
  LabeledSplit split;
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    const auto label = to_lower(trim(table.at(r, "label")));
    int index = -1;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (to_lower(trim(classes[c])) == label) index = static_cast<int>(c);
    }
    if (index < 0) {
      throw Error(kModule, "load_split",
                  path.string() + " row " + std::to_string(r + 1) + ": unknown class '" + table.at(r, "label") + "'");
    }
    split.image_uris.push_back(trim(table.at(r, "image_uri")));
    split.labels.push_back(index);
  }
  if (split.labels.empty()) throw Error(kModule, "load_split", path.string() + ": no rows");
  return split;
}

std::vector<EvalResult> evaluate_dataset(const DatasetEntry& entry, const EncoderPair& encoders,
                                         FeatureStore& features, const EvalOptions& options) {
  std::span<const std::string> templates = entry.templates;
  if (options.template_count) {
    if (*options.template_count == 0 || *options.template_count > templates.size()) {
      throw Error(kModule, "evaluate_dataset",
                  entry.name + ": template_count " + std::to_string(*options.template_count) + " outside [1, " +
                      std::to_string(templates.size()) + "]");
    }
    templates = templates.first(*options.template_count);
  }

  auto embed = [&](const LabeledSplit& split) {
    return embed_images(encoders, features.gather(split.image_uris));
  };

  const auto test = load_split(entry.test_split, entry.classes);
  const Eigen::MatrixXd test_embeddings = embed(test);
  const auto head = build_zeroshot_head(entry.classes, templates, encoders.text());
  const auto prediction = zeroshot_predict(test_embeddings, head);

  std::vector<EvalResult> results;
  results.push_back(EvalResult{entry.name, entry.modality, entry.metric,
                               score_metric(entry.metric, prediction.scores, test.labels), test.labels.size(),
                               "zeroshot", std::nullopt});

  if (entry.train_split && !options.probe_fractions.empty()) {
    const auto train = load_split(*entry.train_split, entry.classes);
    ProbeTask task{entry.name,  entry.modality, entry.metric, static_cast<int>(entry.classes.size()),
                   embed(train), train.labels,   test_embeddings, test.labels};
    for (double fraction : options.probe_fractions) {
      results.push_back(linear_probe(task, fraction, derive_seed(options.seed, fnv1a64(entry.name)), options.probe));
    }
  }
  return results;
}

}  // namespace forge
