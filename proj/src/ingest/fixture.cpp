// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/ingest.hpp"
#include "forge/text_util.hpp"

namespace forge {

const std::vector<std::string>& fixture_labels(ModalityTag tag) {
  static const std::map<ModalityTag, std::vector<std::string>> kLabels = {
      {ModalityTag::XRAY, {"pneumonia", "cardiomegaly", "pneumothorax", "atelectasis", "edema", "fracture"}},
      {ModalityTag::CT, {"hemorrhage", "embolism", "nephrolithiasis", "cirrhosis", "appendicitis", "emphysema"}},
      {ModalityTag::MRI, {"glioma", "meningioma", "adenoma", "sclerosis", "infarct", "hydrocephalus"}},
      {ModalityTag::US, {"goiter", "cholelithiasis", "hydronephrosis", "cyst", "fibroadenoma", "thrombosis"}},
      {ModalityTag::HISTOPATHOLOGY, {"adenocarcinoma", "lymphocytes", "stroma", "necrosis", "mucosa", "adipose"}},
      {ModalityTag::FUNDUS, {"glaucoma", "retinopathy", "cataract", "drusen", "maculopathy", "papilledema"}},
      {ModalityTag::OTHER, {"lesion", "mass", "anomaly", "calcification", "effusion", "inflammation"}},
  };
  return kLabels.at(tag);
}

std::string_view fixture_anatomy(ModalityTag tag) {
  switch (tag) {
    case ModalityTag::XRAY: return "chest";
    case ModalityTag::CT: return "abdomen";
    case ModalityTag::MRI: return "brain";
    case ModalityTag::US: return "neck";
    case ModalityTag::HISTOPATHOLOGY: return "colon";
    case ModalityTag::FUNDUS: return "retina";
    case ModalityTag::OTHER: return "body";
  }
  return "body";
}

std::string fixture_source_name(ModalityTag tag) { return "fixture_" + to_lower(to_string(tag)); }

namespace {

Eigen::VectorXd random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  return v.normalized();
}

}  // namespace

Fixture generate_fixture(const FixtureSpec& spec) {
  if (spec.modalities.empty() || spec.classes_per_modality < 1 || spec.rows_per_class < 1 || spec.feature_dim < 1) {
    throw Error("ingestors", "generate_fixture", "all counts must be >= 1");
  }
  if (spec.test_rows_per_class < 0 || spec.test_rows_per_class > spec.rows_per_class) {
    throw Error("ingestors", "generate_fixture", "test_rows_per_class must lie in [0, rows_per_class]");
  }
  if (spec.noise < 0.0) throw Error("ingestors", "generate_fixture", "noise must be >= 0");

  Fixture fx;
  fx.table = CsvTable({"image_id", "image_uri", "label", "modality", "anatomy", "source_dataset", "split"});
  const auto total_rows = spec.modalities.size() * static_cast<std::size_t>(spec.classes_per_modality) *
                          static_cast<std::size_t>(spec.rows_per_class);
  fx.features.rows = total_rows;
  fx.features.dim = static_cast<std::size_t>(spec.feature_dim);
  fx.features.seed = spec.seed;
  fx.features.data.reserve(total_rows * fx.features.dim);

  std::mt19937_64 centroid_rng(derive_seed(spec.seed, 0xC3));
  std::mt19937_64 noise_rng(derive_seed(spec.seed, 0x5E));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::size_t row_index = 0;
  for (auto tag : spec.modalities) {
    const auto& labels = fixture_labels(tag);
    if (static_cast<std::size_t>(spec.classes_per_modality) > labels.size()) {
      throw Error("ingestors", "generate_fixture",
                  "at most " + std::to_string(labels.size()) + " classes per modality are available");
    }
    const Eigen::VectorXd modality_offset = random_unit(centroid_rng, spec.feature_dim);
    for (int c = 0; c < spec.classes_per_modality; ++c) {
      FixtureClass cls{tag, labels[static_cast<std::size_t>(c)], std::string(fixture_anatomy(tag)),
                       fixture_source_name(tag)};
      const Eigen::VectorXd centroid = modality_offset + random_unit(centroid_rng, spec.feature_dim);
      for (int r = 0; r < spec.rows_per_class; ++r) {
        for (int k = 0; k < spec.feature_dim; ++k) {
          fx.features.data.push_back(static_cast<float>(centroid[k] + spec.noise * gauss(noise_rng)));
        }
        const bool test = r >= spec.rows_per_class - spec.test_rows_per_class;
        const auto id = to_lower(to_string(tag)) + "-" + std::to_string(row_index);
        fx.table.add_row({id, spec.feature_file + "#" + std::to_string(row_index), cls.label,
                          std::string(to_string(tag)), cls.anatomy, cls.source_dataset, test ? "test" : "train"});
        ++row_index;
      }
      fx.classes.push_back(std::move(cls));
    }
  }
  return fx;
}

}  // namespace forge
