// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <set>

#include "forge/cli.hpp"
#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "cli";
constexpr const char* kUsage =
    "usage: forge <ingest|caption|train|eval|stats> --config <path> [--section.key=value ...]\n";

namespace fs = std::filesystem;

// One run owns output_dir for its whole duration.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& output_dir) : path_(output_dir / ".lock") {
    fs::create_directories(output_dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw Error(kModule, "lock", "output_dir is in use by another run (remove " + path_.string() + " if stale)");
    }
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

// Records artifacts as they are written, for the run-manifest.
class Artifacts {
 public:
  explicit Artifacts(fs::path root) : root_(std::move(root)) {}

  void write(const fs::path& path, std::string_view bytes) {
    fs::create_directories(path.parent_path());
    write_file_atomic(path, bytes, kModule, "write_artifact");
    add(path);
  }

  void add(const fs::path& path) {
    hashes_[path.lexically_relative(root_).generic_string()] = sha256_hex(read_file(path, kModule, "hash_artifact"));
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : hashes_) j[k] = v;
    return j;
  }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

std::string safe_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::string json_line(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

void write_run_manifest(const RunConfig& cfg, const std::string& command, const Artifacts& artifacts) {
  nlohmann::ordered_json given = nlohmann::ordered_json::array();
  nlohmann::ordered_json effective = nlohmann::ordered_json::object();
  for (const auto& o : cfg.overrides) {
    given.push_back({{"key", o.key}, {"value", o.value}});
    effective[o.key] = o.value;  // last one wins
  }
  nlohmann::ordered_json j = {{"command", command},     {"config_hash", cfg.hash()},
                              {"seed", cfg.seed},       {"overrides", given},
                              {"effective_overrides", effective}, {"artifacts", artifacts.to_json()}};
  write_file_atomic(cfg.output_dir / ("run-manifest-" + command + ".json"), json_line(j), kModule,
                    "write_run_manifest");
}

std::vector<LabelInfoTriplet> read_triplets(const fs::path& path) {
  if (!fs::exists(path)) throw Error(kModule, "caption", path.string() + " not found; run `forge ingest` first");
  std::vector<LabelInfoTriplet> out;
  try {
    for (const auto& j : nlohmann::json::parse(read_file(path, kModule, "caption"))) {
      out.push_back(LabelInfoTriplet::from_json(j));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(kModule, "caption", path.string() + ": " + e.what());
  }
  return out;
}

void cmd_ingest(const RunConfig& cfg, Artifacts& artifacts, std::ostream& out) {
  if (cfg.sources.empty()) throw ConfigError(kModule, "ingest", "no [[sources]] configured");
  std::vector<SampleRecord> all;
  std::vector<LabelInfoTriplet> triplets;
  std::set<std::string> triplet_keys;
  nlohmann::ordered_json report = nlohmann::ordered_json::object();
  for (const auto& src : cfg.sources) {
    const auto table = CsvTable::load(src.path);
    auto result = ingest(table, src.schema, src.kind);
    report[src.schema.source_dataset] = {{"records", result.records.size()}, {"skipped_rows", result.skipped_rows}};
    for (auto& t : result.triplets) {
      if (triplet_keys.insert(t.key()).second) triplets.push_back(t);
    }
    all.insert(all.end(), std::make_move_iterator(result.records.begin()),
               std::make_move_iterator(result.records.end()));
  }

  auto dedup = dedup_and_validate(std::move(all));
  std::map<std::string, std::vector<SampleRecord>> by_source;
  for (const auto& r : dedup.kept) by_source[r.source_dataset].push_back(r);
  for (auto& [source, records] : by_source) {
    const auto path = cfg.output_dir / "ingest" / (safe_name(source) + ".jsonl");
    fs::create_directories(path.parent_path());
    write_manifest(DatasetManifest(std::move(records)), path);
    artifacts.add(path);
  }
  const DatasetManifest merged(std::move(dedup.kept));
  write_manifest(merged, cfg.output_dir / "manifest.jsonl");
  artifacts.add(cfg.output_dir / "manifest.jsonl");

  nlohmann::ordered_json tj = nlohmann::ordered_json::array();
  for (const auto& t : triplets) tj.push_back(t.to_json());
  artifacts.write(cfg.output_dir / "triplets.json", json_line(tj));

  nlohmann::ordered_json rejected = nlohmann::ordered_json::array();
  for (const auto& [id, why] : dedup.report.rejected) rejected.push_back({{"record_id", id}, {"reason", why}});
  artifacts.write(cfg.output_dir / "ingest_report.json",
                  json_line({{"sources", report}, {"dropped", dedup.report.dropped}, {"rejected", rejected}}));

  const auto stats = compute_stats(merged);
  artifacts.write(cfg.output_dir / "stats.json", json_line(stats.to_json()));
  artifacts.write(cfg.output_dir / "stats.md", stats.to_markdown());
  out << "ingested " << merged.size() << " records from " << cfg.sources.size() << " source(s); "
      << triplets.size() << " label triplets; " << dedup.report.dropped.size() << " duplicates dropped, "
      << dedup.report.rejected.size() << " rejected\n";
}

void cmd_caption(const RunConfig& cfg, Artifacts& artifacts, std::ostream& out) {
  const auto triplets = read_triplets(cfg.output_dir / "triplets.json");
  const auto& c = cfg.caption;
  ValidationRules rules;
  std::optional<CaptionBank> bank;
  if (c.mode == "offline") {
    bank = offline_caption_bank(triplets, c.captions_per_key, cfg.seed);
  } else {
    std::unique_ptr<LlmClient> client;
    if (c.llm.provider == "mock") {
      client = std::make_unique<MockLlmClient>(c.llm.mock_dir);
    } else {
      if (c.llm.http.endpoint.empty() || c.llm.http.model.empty()) {
        throw ConfigError(kModule, "caption", "caption.llm.endpoint and caption.llm.model are required");
      }
      client = std::make_unique<HttpLlmClient>(c.llm.http);
    }
    GenerationOptions options;
    options.captions_per_key = c.captions_per_key;
    if (c.style) options.style_directives = *c.style;
    options.retry.max_attempts = c.max_attempts;
    options.retry.backoff_base = std::chrono::milliseconds(c.backoff_ms);
    options.max_in_flight = c.max_in_flight;
    options.requests_per_second = c.requests_per_second;
    options.rules = rules;
    CaptionCache cache = c.cache ? CaptionCache::load(*c.cache) : CaptionCache{};
    auto result = generate_caption_bank(triplets, *client, options, c.cache ? &cache : nullptr);
    if (c.cache) cache.save(*c.cache);
    out << client->identity() << ": " << result.client_calls << " request(s), " << result.regenerated_keys.size()
        << " regenerated, " << result.flagged_keys.size() << " flagged\n";
    bank = std::move(result.bank);
  }
  const auto path = cfg.output_dir / "caption_bank.json";
  write_caption_bank(*bank, path);
  artifacts.add(path);
  const auto report = validate_caption_bank(*bank, triplets, rules);
  artifacts.write(cfg.output_dir / "caption_validation.json", json_line(report.to_json()));
  out << "caption bank: " << bank->entries().size() << " entries x " << c.captions_per_key << " captions; "
      << report.failures.size() << " entries failed validation\n";
}

std::optional<CaptionBank> read_bank_if_present(const RunConfig& cfg) {
  const auto path = cfg.output_dir / "caption_bank.json";
  if (!fs::exists(path)) return std::nullopt;
  return read_caption_bank(path);
}

void cmd_train(const RunConfig& cfg, Artifacts& artifacts, std::ostream& out) {
  const auto manifest = read_manifest(cfg.output_dir / "manifest.jsonl");
  const auto bank = read_bank_if_present(cfg);
  if (manifest.empty()) throw Error(kModule, "train", "manifest is empty");
  FeatureStore features(cfg.feature_root);
  const auto feature_dim = static_cast<Eigen::Index>(features.dim(manifest.records().front().image_uri));
  auto encoders = make_reference_encoders(feature_dim, cfg.training.embed_dim, cfg.training.text_buckets, cfg.seed);

  const auto train_dir = cfg.output_dir / "train";
  fs::create_directories(train_dir);
  TrainOptions options;
  options.checkpoint_dir = train_dir;
  options.checkpoint_interval = cfg.checkpoint_interval;
  options.resume_from = cfg.resume_from;
  const auto result = train_loop(manifest, bank ? &*bank : nullptr, features, std::move(encoders), cfg.training, options);
  artifacts.write(train_dir / "metrics.jsonl", metrics_jsonl(result.metrics));
  for (const auto& p : result.checkpoints) artifacts.add(p);
  if (!result.metrics.empty()) {
    out << "trained " << result.metrics.size() << " step(s); loss " << result.metrics.front().loss << " -> "
        << result.metrics.back().loss << "; final temperature " << std::exp(result.state.log_temperature) << "\n";
  }
}

void cmd_eval(const RunConfig& cfg, Artifacts& artifacts, std::ostream& out) {
  if (!cfg.evaluation.registry) throw ConfigError(kModule, "eval", "evaluation.registry is required");
  const auto checkpoint = cfg.evaluation.checkpoint.value_or(cfg.output_dir / "train" / "checkpoint-final.bin");
  if (!fs::exists(checkpoint)) throw Error(kModule, "eval", "checkpoint not found: " + checkpoint.string());
  const auto state = load_checkpoint(checkpoint);
  const auto registry = load_registry(*cfg.evaluation.registry);
  FeatureStore features(cfg.feature_root);

  EvalOptions options;
  if (cfg.evaluation.template_count > 0) options.template_count = cfg.evaluation.template_count;
  options.probe_fractions = cfg.evaluation.probe_fractions;
  options.seed = cfg.seed;

  std::vector<EvalResult> zeroshot;
  std::map<double, std::vector<EvalResult>> probes;
  std::string jsonl;
  for (const auto& entry : registry) {
    for (const auto& r : evaluate_dataset(entry, state.encoders, features, options)) {
      jsonl += r.to_json().dump() + "\n";
      if (r.fraction) {
        probes[*r.fraction].push_back(r);
      } else {
        zeroshot.push_back(r);
      }
    }
  }
  const auto eval_dir = cfg.output_dir / "eval";
  artifacts.write(eval_dir / "results.jsonl", jsonl);

  const auto zs = modality_report(zeroshot);
  std::string md = "# Zero-shot\n\n" + zs.to_markdown();
  nlohmann::ordered_json report = {{"zeroshot", zs.to_json()}, {"linear_probe", nlohmann::ordered_json::object()}};
  for (const auto& [fraction, results] : probes) {
    const auto pr = modality_report(results);
    char label[32];
    std::snprintf(label, sizeof label, "%g", fraction);
    md += "\n# Linear probe, fraction " + std::string(label) + "\n\n" + pr.to_markdown();
    report["linear_probe"][label] = pr.to_json();
  }
  artifacts.write(eval_dir / "report.md", md);
  artifacts.write(eval_dir / "report.json", json_line(report));
  out << md;
}

void cmd_stats(const RunConfig& cfg, Artifacts& artifacts, std::ostream& out) {
  const auto manifest = read_manifest(cfg.output_dir / "manifest.jsonl");
  const auto bank = read_bank_if_present(cfg);
  const auto stats = compute_stats(manifest, bank ? &*bank : nullptr);
  artifacts.write(cfg.output_dir / "stats.json", json_line(stats.to_json()));
  artifacts.write(cfg.output_dir / "stats.md", stats.to_markdown());
  out << stats.to_markdown();
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  std::string command = "?";
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
      (args.empty() ? err : out) << kUsage;
      return args.empty() ? 2 : 0;
    }
    command = args[0];
    static const std::set<std::string> kCommands = {"ingest", "caption", "train", "eval", "stats"};
    if (!kCommands.count(command)) throw ConfigError(kModule, "run", "unknown command '" + command + "'");

    std::optional<fs::path> config_path;
    std::vector<std::string> rest;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config") {
        if (i + 1 >= args.size()) throw ConfigError(kModule, "run", "--config needs a path");
        config_path = args[++i];
      } else if (args[i].rfind("--config=", 0) == 0) {
        config_path = args[i].substr(9);
      } else {
        rest.push_back(args[i]);
      }
    }
    if (!config_path) throw ConfigError(kModule, "run", "--config is required");
    const auto overrides = parse_overrides(rest);
    const auto cfg = load_run_config(*config_path, overrides);

    OutputLock lock(cfg.output_dir);
    Artifacts artifacts(cfg.output_dir);
    if (command == "ingest") cmd_ingest(cfg, artifacts, out);
    if (command == "caption") cmd_caption(cfg, artifacts, out);
    if (command == "train") cmd_train(cfg, artifacts, out);
    if (command == "eval") cmd_eval(cfg, artifacts, out);
    if (command == "stats") cmd_stats(cfg, artifacts, out);
    write_run_manifest(cfg, command, artifacts);
    return 0;
  } catch (const ConfigError& e) {
    err << "forge " << command << ": invalid configuration [" << e.module() << "/" << e.operation() << "]: " << e.what()
        << "\n"
        << kUsage;
    return 2;
  } catch (const Error& e) {
    err << "forge " << command << ": failed [" << e.module() << "/" << e.operation() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "forge " << command << ": failed [" << kModule << "/" << command << "]: " << e.what() << "\n";
    return 1;
  }
}

void write_fixture_project(const Fixture& fixture, const FixtureSpec& spec, const fs::path& dir) {
  if (spec.test_rows_per_class < 1) {
    throw Error(kModule, "write_fixture_project", "test_rows_per_class must be >= 1 to build evaluation splits");
  }
  fs::create_directories(dir / "splits");
  write_feature_matrix(fixture.features, dir / spec.feature_file);

  const auto& t = fixture.table;
  nlohmann::ordered_json registry = nlohmann::ordered_json::array();
  std::string sources_toml;
  for (auto tag : spec.modalities) {
    const auto source = fixture_source_name(tag);
    CsvTable train_rows(t.columns());
    CsvTable train_split({"image_uri", "label"});
    CsvTable test_split({"image_uri", "label"});
    std::vector<std::string> classes;
    for (const auto& c : fixture.classes) {
      if (c.modality == tag) classes.push_back(c.label);
    }
    for (std::size_t r = 0; r < t.row_count(); ++r) {
      if (t.at(r, "source_dataset") != source) continue;
      std::vector<std::string> split_row{t.at(r, "image_uri"), t.at(r, "label")};
      if (t.at(r, "split") == "test") {
        test_split.add_row(split_row);
      } else {
        train_rows.add_row(t.row(r));
        train_split.add_row(split_row);
      }
    }
    train_rows.save(dir / (source + ".csv"));
    train_split.save(dir / "splits" / (source + "_train.csv"));
    test_split.save(dir / "splits" / (source + "_test.csv"));
    registry.push_back({{"name", source},
                        {"modality", std::string(to_string(tag))},
                        {"metric", "ACC"},
                        {"classes", classes},
                        {"test_split_uri", "splits/" + source + "_test.csv"},
                        {"train_split_uri", "splits/" + source + "_train.csv"},
                        {"templates", default_templates(tag)}});
    sources_toml += "[[sources]]\npath = \"" + source + ".csv\"\nkind = \"label_only\"\n[sources.schema]\n" +
                    "source_dataset = \"" + source + "\"\nimage_column = \"image_uri\"\nid_column = \"image_id\"\n" +
                    "label_column = \"label\"\nmodality = \"" + std::string(to_string(tag)) +
                    "\"\nanatomy_column = \"anatomy\"\n\n";
  }
  write_file_atomic(dir / "registry.json", registry.dump(2) + "\n", kModule, "write_fixture_project");

  std::string toml = "# Generated fixture project.\noutput_dir = \"out\"\nseed = " + std::to_string(spec.seed) +
                     "\nfeature_root = \".\"\n\n" + sources_toml +
                     "[caption]\nM = 10\nmode = \"offline\"\n\n"
                     "[training]\nbatch_size = 32\nlearning_rate = 0.01\nwarmup_iters = 20\nmax_steps = 200\n"
                     "temperature_init = 0.07\ntemperature_learnable = true\nembed_dim = 32\ntext_buckets = 1024\n\n"
                     "[evaluation]\nregistry = \"registry.json\"\ntemplate_count = 0\nprobe_fractions = [0.1, 1.0]\n";
  write_file_atomic(dir / "forge.toml", toml, kModule, "write_fixture_project");
}

}  // namespace forge
