// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Writes a synthetic, linearly separable fixture project that the `forge`
// commands can run end to end.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "forge/cli.hpp"

int main(int argc, char** argv) {
  forge::FixtureSpec spec;
  spec.test_rows_per_class = 10;
  std::string out;
  std::vector<std::string> modalities{"XRAY", "MRI", "FUNDUS"};

  CLI::App app{"Write a synthetic fixture project for the forge pipeline"};
  app.add_option("--out", out, "Destination directory")->required();
  app.add_option("--seed", spec.seed, "Fixture seed");
  app.add_option("--noise", spec.noise, "Per-feature Gaussian noise")->check(CLI::NonNegativeNumber);
  app.add_option("--modalities", modalities, "Modality tags")->delimiter(',');
  app.add_option("--classes-per-modality", spec.classes_per_modality)->check(CLI::PositiveNumber);
  app.add_option("--rows-per-class", spec.rows_per_class)->check(CLI::PositiveNumber);
  app.add_option("--test-rows-per-class", spec.test_rows_per_class)->check(CLI::PositiveNumber);
  app.add_option("--feature-dim", spec.feature_dim)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    spec.modalities.clear();
    for (const auto& name : modalities) {
      auto tag = forge::parse_modality(name);
      if (!tag) {
        std::cerr << "forge_fixture: unknown modality '" << name << "'\n";
        return 2;
      }
      spec.modalities.push_back(*tag);
    }
    const auto fixture = forge::generate_fixture(spec);
    forge::write_fixture_project(fixture, spec, out);
    std::cout << "wrote " << fixture.table.row_count() << " rows across " << spec.modalities.size()
              << " modalities to " << out << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "forge_fixture: " << e.what() << "\n";
    return 1;
  }
}
