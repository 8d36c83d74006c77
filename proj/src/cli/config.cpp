// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include <toml.hpp>

#include "forge/cli.hpp"
#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "cli";

[[noreturn]] void config_error(const std::string& msg) { throw ConfigError(kModule, "load_config", msg); }

// Typed, strict view over one TOML table. finish() rejects keys nobody read.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  std::string where(std::string_view key) const { return name_.empty() ? std::string(key) : name_ + "." + std::string(key); }

  const toml::node* get(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ ? table_->get(key) : nullptr;
  }

  std::optional<std::string> str(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value_exact<std::string>()) return *v;
    config_error(where(key) + " must be a string");
  }

  std::optional<std::int64_t> integer(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value_exact<std::int64_t>()) return *v;
    config_error(where(key) + " must be an integer");
  }

  std::optional<double> number(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value_exact<double>()) return *v;
    if (auto v = n->value_exact<std::int64_t>()) return static_cast<double>(*v);
    config_error(where(key) + " must be a number");
  }

  std::optional<bool> boolean(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value_exact<bool>()) return *v;
    config_error(where(key) + " must be true or false");
  }

  // Arrays of strings; a plain string is split on commas.
  std::optional<std::vector<std::string>> strings(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    std::vector<std::string> out;
    if (auto s = n->value_exact<std::string>()) {
      for (auto& part : split(*s, ',')) {
        if (auto t = trim(part); !t.empty()) out.push_back(t);
      }
      return out;
    }
    if (const auto* arr = n->as_array()) {
      for (const auto& item : *arr) {
        auto s = item.value_exact<std::string>();
        if (!s) config_error(where(key) + " must be a list of strings");
        out.push_back(*s);
      }
      return out;
    }
    config_error(where(key) + " must be a list of strings");
  }

  std::optional<std::vector<double>> numbers(std::string_view key) {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    std::vector<double> out;
    auto push = [&](const toml::node& item) {
      if (auto v = item.value_exact<double>()) {
        out.push_back(*v);
      } else if (auto i = item.value_exact<std::int64_t>()) {
        out.push_back(static_cast<double>(*i));
      } else {
        config_error(where(key) + " must be a list of numbers");
      }
    };
    if (const auto* arr = n->as_array()) {
      for (const auto& item : *arr) push(item);
    } else if (n->is_number()) {
      push(*n);
    } else {
      config_error(where(key) + " must be a list of numbers");
    }
    return out;
  }

  Section sub(std::string_view key) {
    const auto* n = get(key);
    if (n && !n->is_table()) config_error(where(key) + " must be a table");
    return Section(n ? n->as_table() : nullptr, where(key));
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, _] : *table_) {
      if (seen_.count(std::string(k.str()))) continue;
      if (k.str() == "api_key" || k.str() == "token") {
        config_error(where(k.str()) +
                     ": credentials are never read from config files; set the environment variable named by "
                     "caption.llm.api_key_env");
      }
      config_error("unknown key '" + where(k.str()) + "'");
    }
  }

 private:
  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

int to_int(std::int64_t v, const std::string& key) {
  if (v < INT32_MIN || v > INT32_MAX) config_error(key + " is out of range");
  return static_cast<int>(v);
}

void apply_override(toml::table& root, const Override& o) {
  const auto parts = split(o.key, '.');
  for (const auto& p : parts) {
    if (p.empty()) config_error("override key '" + o.key + "' has an empty component");
  }
  if (parts.front() == "sources") config_error("sources cannot be overridden on the command line");

  toml::table* table = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    auto* node = table->get(parts[i]);
    if (!node) {
      table->insert_or_assign(parts[i], toml::table{});
      node = table->get(parts[i]);
    }
    if (!node->is_table()) config_error("override '" + o.key + "': '" + parts[i] + "' is not a table");
    table = node->as_table();
  }

  // Values are TOML literals when they parse as one, strings otherwise.
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + o.value);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", o.value);
  }
  parsed.get("v")->visit([&](auto&& value) { table->insert_or_assign(parts.back(), value); });
}

SchemaMap read_schema(Section s) {
  SchemaMap m;
  m.source_dataset = s.str("source_dataset").value_or("");
  m.image_column = s.str("image_column").value_or("");
  m.id_column = s.str("id_column");
  m.label_column = s.str("label_column");
  m.indicator_columns = s.strings("indicator_columns").value_or(std::vector<std::string>{});
  m.caption_column = s.str("caption_column");
  if (auto mod = s.str("modality")) {
    m.modality = parse_modality(*mod);
    if (!m.modality) config_error(s.where("modality") + ": unknown modality '" + *mod + "'");
  }
  m.modality_column = s.str("modality_column");
  m.modality_name = s.str("modality_name");
  m.anatomy_column = s.str("anatomy_column");
  s.finish();
  if (m.source_dataset.empty()) config_error(s.where("source_dataset") + " is required");
  if (m.image_column.empty()) config_error(s.where("image_column") + " is required");
  return m;
}

}  // namespace

std::vector<Override> parse_overrides(std::span<const std::string> args) {
  std::vector<Override> out;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
      throw ConfigError(kModule, "parse_overrides", "expected --section.key=value, got '" + a + "'");
    }
    out.push_back(Override{a.substr(2, eq - 2), a.substr(eq + 1)});
  }
  return out;
}

RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                           std::span<const Override> overrides) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    config_error("line " + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
  }
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig cfg;
  cfg.overrides.assign(overrides.begin(), overrides.end());
  Section top(&root, "");
  const auto output_dir = top.str("output_dir");
  if (!output_dir) config_error("output_dir is required");
  cfg.output_dir = resolve(base_dir, *output_dir);
  if (auto seed = top.integer("seed")) {
    if (*seed < 0) config_error("seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*seed);
  }
  cfg.feature_root = resolve(base_dir, top.str("feature_root").value_or("."));

  if (const auto* sources = top.get("sources")) {
    const auto* arr = sources->as_array();
    if (!arr) config_error("sources must be an array of tables ([[sources]])");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = arr->get(i)->as_table();
      if (!t) config_error("sources[" + std::to_string(i) + "] must be a table");
      Section s(t, "sources[" + std::to_string(i) + "]");
      SourceConfig src;
      const auto path = s.str("path");
      if (!path) config_error(s.where("path") + " is required");
      src.path = resolve(base_dir, *path);
      const auto kind = s.str("kind").value_or("label_only");
      const auto parsed_kind = parse_source_kind(kind);
      if (!parsed_kind) config_error(s.where("kind") + " must be label_only, image_text or multilabel");
      src.kind = *parsed_kind;
      src.schema = read_schema(s.sub("schema"));
      s.finish();
      cfg.sources.push_back(std::move(src));
    }
  }

  {
    Section c = top.sub("caption");
    if (auto m = c.integer("M")) cfg.caption.captions_per_key = to_int(*m, "caption.M");
    if (cfg.caption.captions_per_key < 1) config_error("caption.M must be >= 1");
    cfg.caption.mode = c.str("mode").value_or("offline");
    if (cfg.caption.mode != "offline" && cfg.caption.mode != "llm") config_error("caption.mode must be offline or llm");
    cfg.caption.style = c.str("style");
    if (auto v = c.integer("max_in_flight")) cfg.caption.max_in_flight = to_int(*v, "caption.max_in_flight");
    if (auto v = c.number("requests_per_second")) cfg.caption.requests_per_second = *v;
    if (auto v = c.integer("max_attempts")) cfg.caption.max_attempts = to_int(*v, "caption.max_attempts");
    if (auto v = c.integer("backoff_ms")) cfg.caption.backoff_ms = to_int(*v, "caption.backoff_ms");
    if (auto v = c.str("cache")) cfg.caption.cache = resolve(base_dir, *v);
    if (cfg.caption.max_in_flight < 1) config_error("caption.max_in_flight must be >= 1");
    if (cfg.caption.max_attempts < 1) config_error("caption.max_attempts must be >= 1");
    if (cfg.caption.requests_per_second < 0) config_error("caption.requests_per_second must be >= 0");

    Section l = c.sub("llm");
    auto& llm = cfg.caption.llm;
    llm.provider = l.str("provider").value_or("http");
    if (llm.provider != "http" && llm.provider != "mock") config_error("caption.llm.provider must be http or mock");
    if (auto v = l.str("endpoint")) llm.http.endpoint = *v;
    if (auto v = l.str("path")) llm.http.path = *v;
    if (auto v = l.str("model")) llm.http.model = *v;
    if (auto v = l.str("api_key_env")) llm.http.api_key_env = *v;
    if (auto v = l.number("temperature")) llm.http.temperature = *v;
    if (auto v = l.integer("seed")) llm.http.seed = *v;
    if (auto v = l.integer("timeout_seconds")) llm.http.timeout_seconds = to_int(*v, "caption.llm.timeout_seconds");
    if (auto v = l.str("mock_dir")) llm.mock_dir = resolve(base_dir, *v);
    l.finish();
    c.finish();
  }

  {
    Section t = top.sub("training");
    auto& tc = cfg.training;
    if (auto v = t.integer("batch_size")) tc.batch_size = to_int(*v, "training.batch_size");
    if (auto v = t.number("learning_rate")) tc.learning_rate = *v;
    if (auto v = t.integer("warmup_iters")) tc.warmup_iters = *v;
    if (auto v = t.integer("epochs")) tc.epochs = to_int(*v, "training.epochs");
    if (auto v = t.integer("max_steps")) tc.max_steps = *v;
    if (auto v = t.number("temperature_init")) tc.temperature_init = *v;
    if (auto v = t.boolean("temperature_learnable")) tc.temperature_learnable = *v;
    if (auto v = t.strings("source_exclusions")) tc.source_exclusions = *v;
    if (auto v = t.integer("embed_dim")) tc.embed_dim = to_int(*v, "training.embed_dim");
    if (auto v = t.integer("text_buckets")) tc.text_buckets = to_int(*v, "training.text_buckets");
    if (auto v = t.number("adam_beta1")) tc.adam_beta1 = *v;
    if (auto v = t.number("adam_beta2")) tc.adam_beta2 = *v;
    if (auto v = t.number("adam_epsilon")) tc.adam_epsilon = *v;
    if (auto v = t.integer("checkpoint_interval")) cfg.checkpoint_interval = *v;
    if (auto v = t.str("resume_from")) cfg.resume_from = resolve(base_dir, *v);
    t.finish();
    tc.seed = cfg.seed;
    tc.validate();
    if (cfg.checkpoint_interval < 0) config_error("training.checkpoint_interval must be >= 0");
  }

  {
    Section e = top.sub("evaluation");
    auto& ec = cfg.evaluation;
    if (auto v = e.str("registry")) ec.registry = resolve(base_dir, *v);
    if (auto v = e.integer("template_count")) {
      if (*v < 0) config_error("evaluation.template_count must be >= 0");
      ec.template_count = static_cast<std::size_t>(*v);
    }
    if (auto v = e.numbers("probe_fractions")) ec.probe_fractions = *v;
    for (double f : ec.probe_fractions) {
      if (!(f > 0.0 && f <= 1.0)) config_error("evaluation.probe_fractions must lie in (0, 1]");
    }
    if (auto v = e.str("checkpoint")) ec.checkpoint = resolve(base_dir, *v);
    e.finish();
  }
  top.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::span<const Override> overrides) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(kModule, "load_config", "config file not found: " + path.string());
  }
  return parse_run_config(read_file(path, kModule, "load_config"), path.parent_path(), overrides);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json sources_json = nlohmann::ordered_json::array();
  for (const auto& s : sources) {
    auto opt = [](const std::optional<std::string>& v) {
      return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    sources_json.push_back({{"path", s.path.string()},
                            {"kind", std::string(to_string(s.kind))},
                            {"schema",
                             {{"source_dataset", s.schema.source_dataset},
                              {"image_column", s.schema.image_column},
                              {"id_column", opt(s.schema.id_column)},
                              {"label_column", opt(s.schema.label_column)},
                              {"indicator_columns", s.schema.indicator_columns},
                              {"caption_column", opt(s.schema.caption_column)},
                              {"modality", s.schema.modality ? nlohmann::ordered_json(std::string(to_string(*s.schema.modality)))
                                                             : nlohmann::ordered_json(nullptr)},
                              {"modality_column", opt(s.schema.modality_column)},
                              {"modality_name", opt(s.schema.modality_name)},
                              {"anatomy_column", opt(s.schema.anatomy_column)}}}});
  }
  const auto& c = caption;
  nlohmann::ordered_json caption_json = {
      {"M", c.captions_per_key},
      {"mode", c.mode},
      {"style", c.style ? nlohmann::ordered_json(*c.style) : nlohmann::ordered_json(nullptr)},
      {"max_in_flight", c.max_in_flight},
      {"requests_per_second", c.requests_per_second},
      {"max_attempts", c.max_attempts},
      {"backoff_ms", c.backoff_ms},
      {"cache", c.cache ? nlohmann::ordered_json(c.cache->string()) : nlohmann::ordered_json(nullptr)},
      {"llm",
       {{"provider", c.llm.provider},
        {"endpoint", c.llm.http.endpoint},
        {"path", c.llm.http.path},
        {"model", c.llm.http.model},
        {"api_key_env", c.llm.http.api_key_env},
        {"temperature", c.llm.http.temperature},
        {"seed", c.llm.http.seed ? nlohmann::ordered_json(*c.llm.http.seed) : nlohmann::ordered_json(nullptr)},
        {"timeout_seconds", c.llm.http.timeout_seconds},
        {"mock_dir", c.llm.mock_dir.string()}}}};
  auto training_json = training.to_json();
  training_json["checkpoint_interval"] = checkpoint_interval;
  training_json["resume_from"] = resume_from ? nlohmann::ordered_json(resume_from->string()) : nlohmann::ordered_json(nullptr);
  const auto& e = evaluation;
  nlohmann::ordered_json eval_json = {
      {"registry", e.registry ? nlohmann::ordered_json(e.registry->string()) : nlohmann::ordered_json(nullptr)},
      {"template_count", e.template_count},
      {"probe_fractions", e.probe_fractions},
      {"checkpoint", e.checkpoint ? nlohmann::ordered_json(e.checkpoint->string()) : nlohmann::ordered_json(nullptr)}};
  return {{"output_dir", output_dir.string()},
          {"seed", seed},
          {"feature_root", feature_root.string()},
          {"sources", sources_json},
          {"caption", caption_json},
          {"training", training_json},
          {"evaluation", eval_json}};
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

}  // namespace forge
