// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/text_util.hpp"
#include "test_util.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace forge;

namespace {

std::string numbered(const std::vector<std::string>& items) {
  std::string out = "Here are the captions:\n";
  for (std::size_t i = 0; i < items.size(); ++i) out += std::to_string(i + 1) + ". " + items[i] + "\n";
  return out + "Let me know if you need more.\n";
}

// Captions mentioning the triplet's label, one per slot.
std::string list_for(const std::string& prompt, int n) {
  auto start = prompt.find("Disease/Category Name: ") + 23;
  auto label = prompt.substr(start, prompt.find(",\n", start) - start);
  std::vector<std::string> items;
  for (int i = 0; i < n; ++i) items.push_back("Radiograph number " + std::to_string(i) + " showing " + label + " clearly.");
  return numbered(items);
}

GenerationOptions quiet(int m) {
  GenerationOptions o;
  o.captions_per_key = m;
  o.sleep = [](std::chrono::milliseconds) {};
  o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
  return o;
}

}  // namespace

TEST_CASE("prompt carries the label-info lines and the diversification request") {
  LabelInfoTriplet t("pneumonia", "chest X-ray", std::string("lungs"));
  auto p = build_prompt(PromptSpec{t, 10});
  CHECK(p.find("Generate a caption for a medical image") != std::string::npos);
  CHECK(p.find("Disease/Category Name: pneumonia") != std::string::npos);
  CHECK(p.find("Modality Name: chest X-ray") != std::string::npos);
  CHECK(p.find("Organ Name: lungs") != std::string::npos);
  CHECK(p.find("in diverse tones and styles") != std::string::npos);
  CHECK(p.find("professional medical nomenclature") != std::string::npos);
  CHECK(p.find("10 different captions") != std::string::npos);
  CHECK(build_prompt(PromptSpec{t, 10}) == p);

  auto no_organ = build_prompt(PromptSpec{LabelInfoTriplet("pneumonia", "chest X-ray"), 10});
  CHECK(no_organ.find("Organ Name:") == std::string::npos);
  CHECK_THROWS_AS(build_prompt(PromptSpec{t, 0}), Error);
}

TEST_CASE("numbered list parsing tolerates prose and stops at gaps") {
  auto items = parse_numbered_list("Sure!\n1. first one\n2) \"second one\"\n\n3. **third**\n5. skipped\nThanks");
  CHECK(items == std::vector<std::string>{"first one", "second one", "third"});
  CHECK(parse_numbered_list("no list here").empty());
}

TEST_CASE("a well-formed mock response fills one entry in list order") {
  testing_util::TempDir dir;
  LabelInfoTriplet t("edema", "x-ray");
  auto prompt = build_prompt(PromptSpec{t, 10});
  std::vector<std::string> items;
  for (int i = 0; i < 10; ++i) items.push_back("Caption " + std::to_string(i) + " with edema present here.");
  std::ofstream(dir / (MockLlmClient::prompt_hash(prompt) + ".txt")) << numbered(items);

  MockLlmClient mock(dir.path());
  std::vector<LabelInfoTriplet> ts{t};
  auto r = generate_caption_bank(ts, mock, quiet(10));
  CHECK(r.bank.at(t.key()) == items);
  CHECK(r.client_calls == 1);
  CHECK(r.bank.metadata().captions_per_key == 10);
  CHECK(r.bank.metadata().generator.rfind("mock:", 0) == 0);
}

TEST_CASE("a short response is retried once and then fails naming the key") {
  std::atomic<int> calls{0};
  CallbackLlmClient short_client([&](const std::string& p) {
    ++calls;
    return list_for(p, 7);
  });
  LabelInfoTriplet t("edema", "x-ray");
  std::vector<LabelInfoTriplet> ts{t};
  try {
    generate_caption_bank(ts, short_client, quiet(10));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(t.key()) != std::string::npos);
  }
  CHECK(calls == 2);

  // Short once, then complete: succeeds on the retry.
  calls = 0;
  CallbackLlmClient flaky([&](const std::string& p) { return list_for(p, ++calls == 1 ? 7 : 10); });
  auto r = generate_caption_bank(ts, flaky, quiet(10));
  CHECK(r.client_calls == 2);
  CHECK(r.bank.at(t.key()).size() == 10);
}

TEST_CASE("client is called once per distinct key") {
  std::vector<LabelInfoTriplet> ts{LabelInfoTriplet("a", "mri"), LabelInfoTriplet("b", "mri"),
                                   LabelInfoTriplet("A ", "MRI"), LabelInfoTriplet("c", "mri"),
                                   LabelInfoTriplet("d", "mri")};
  std::set<std::string> distinct;
  for (const auto& t : ts) distinct.insert(t.key());
  REQUIRE(distinct.size() == 4);

  std::atomic<int> calls{0};
  CallbackLlmClient counting([&](const std::string& p) {
    ++calls;
    return list_for(p, 4);
  });
  auto r = generate_caption_bank(ts, counting, quiet(3));
  CHECK(r.bank.size() == 4);
  CHECK(calls == 4);
  CHECK(r.client_calls == 4);
}

TEST_CASE("concurrent generation assembles the same bank as sequential") {
  std::vector<LabelInfoTriplet> ts;
  for (int i = 0; i < 12; ++i) ts.emplace_back("label" + std::to_string(i), "ct");
  CallbackLlmClient client([](const std::string& p) { return list_for(p, 4); });
  auto seq = generate_caption_bank(ts, client, quiet(4));
  auto opts = quiet(4);
  opts.max_in_flight = 4;
  auto par = generate_caption_bank(ts, client, opts);
  CHECK(seq.bank == par.bank);
  CHECK(par.client_calls == 12);
}

TEST_CASE("rule failures regenerate once and then flag the key") {
  LabelInfoTriplet t("edema", "x-ray");
  std::vector<LabelInfoTriplet> ts{t};
  std::atomic<int> calls{0};
  CallbackLlmClient off_topic([&](const std::string&) {
    ++calls;
    return numbered({"A plain frontal chest radiograph image.", "Another frontal chest radiograph image."});
  });
  auto opts = quiet(2);
  opts.retry.max_attempts = 3;
  auto r = generate_caption_bank(ts, off_topic, opts);
  CHECK(calls == 2);
  CHECK(r.regenerated_keys == std::vector<std::string>{t.key()});
  CHECK(r.flagged_keys == std::vector<std::string>{t.key()});

  calls = 0;
  CallbackLlmClient fixes_itself([&](const std::string& p) {
    if (++calls == 1) return numbered({"A plain frontal chest radiograph image.", "Another one here for sure."});
    return list_for(p, 2);
  });
  auto fixed = generate_caption_bank(ts, fixes_itself, opts);
  CHECK(calls == 2);
  CHECK(fixed.regenerated_keys.size() == 1);
  CHECK(fixed.flagged_keys.empty());
}

TEST_CASE("transport failures exhaust retries with backoff") {
  std::vector<std::chrono::milliseconds> slept;
  CallbackLlmClient broken([](const std::string&) -> std::string { throw Error("t", "t", "connection refused"); });
  auto opts = quiet(2);
  opts.retry.max_attempts = 3;
  opts.retry.backoff_base = std::chrono::milliseconds(100);
  opts.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d); };
  std::vector<LabelInfoTriplet> ts{LabelInfoTriplet("x", "y")};
  CHECK_THROWS_WITH_AS(generate_caption_bank(ts, broken, opts), doctest::Contains("connection refused"), Error);
  REQUIRE(slept.size() == 2);
  CHECK(slept[0].count() == 100);
  CHECK(slept[1].count() == 200);
}

TEST_CASE("cache prevents repeat calls and survives a save/load cycle") {
  testing_util::TempDir dir;
  std::vector<LabelInfoTriplet> ts{LabelInfoTriplet("a", "mri"), LabelInfoTriplet("b", "mri")};
  std::atomic<int> calls{0};
  CallbackLlmClient client([&](const std::string& p) {
    ++calls;
    return list_for(p, 4);
  });
  CaptionCache cache;
  auto first = generate_caption_bank(ts, client, quiet(3), &cache);
  cache.save(dir / "cache.json");
  auto loaded = CaptionCache::load(dir / "cache.json");
  auto second = generate_caption_bank(ts, client, quiet(3), &loaded);
  CHECK(calls == 2);
  CHECK(second.client_calls == 0);
  CHECK(first.bank.entries() == second.bank.entries());
  // A different caption count is a different cache entry.
  generate_caption_bank(ts, client, quiet(4), &loaded);
  CHECK(calls == 4);
}

TEST_CASE("offline bank with one caption is the fixed template and seed-independent") {
  std::vector<LabelInfoTriplet> ts{LabelInfoTriplet("glioma", "MRI", std::string("brain")),
                                   LabelInfoTriplet("cataract", "fundus photograph")};
  auto a = offline_caption_bank(ts, 1, 1);
  auto b = offline_caption_bank(ts, 1, 999);
  CHECK(a == b);
  CHECK(a.at(ts[0].key()) == std::vector<std::string>{"A medical MRI image showing glioma in the brain."});
  CHECK(a.at(ts[1].key()).size() == 1);
  CHECK(a.at(ts[1].key())[0].find("cataract") != std::string::npos);
}

TEST_CASE("offline banks are deterministic, distinct and pass validation") {
  std::vector<LabelInfoTriplet> ts{LabelInfoTriplet("pneumonia", "chest X-ray", std::string("lungs")),
                                   LabelInfoTriplet("glioma", "MRI", std::string("brain")),
                                   LabelInfoTriplet("tumor", "histopathology")};
  auto a = offline_caption_bank(ts, 10, 42);
  auto b = offline_caption_bank(ts, 10, 42);
  CHECK(serialize_caption_bank(a) == serialize_caption_bank(b));
  CHECK_FALSE(offline_caption_bank(ts, 10, 43) == a);
  for (const auto& [key, captions] : a.entries()) {
    CHECK(captions.size() == 10);
    for (std::size_t i = 0; i < captions.size(); ++i) {
      for (std::size_t j = i + 1; j < captions.size(); ++j) CHECK(captions[i] != captions[j]);
    }
  }
  CHECK(validate_caption_bank(a, ts).ok());
  CHECK(offline_grammar_capacity() >= 10);
  CHECK_THROWS_WITH_AS(offline_caption_bank(ts, static_cast<int>(offline_grammar_capacity()) + 1, 0),
                       doctest::Contains(std::to_string(offline_grammar_capacity()).c_str()), Error);
}

TEST_CASE("validation flags label, length and duplicate problems without mutating") {
  LabelInfoTriplet t("pneumonia", "x-ray");
  LabelInfoTriplet mi("myocardial infarction", "ct");
  LabelInfoTriplet absent("edema", "x-ray");
  CaptionBank bank({"g", "t", 3},
                   {{t.key(),
                     {"Chest radiograph demonstrating pneumonia.", "A chest film without the finding named.",
                      "Chest radiograph demonstrating pneumonia."}},
                    {mi.key(), {"Cardiac CT consistent with acute MI.", "MI", "Cardiac CT consistent with acute MI again."}}});
  auto before = serialize_caption_bank(bank);
  ValidationRules rules;
  rules.alias_groups = {{"MI", "myocardial infarction"}};
  std::vector<LabelInfoTriplet> ts{t, mi, absent};
  auto report = validate_caption_bank(bank, ts, rules);
  CHECK(serialize_caption_bank(bank) == before);
  CHECK(report.has(t.key(), CaptionCheck::label_mention));
  CHECK(report.has(t.key(), CaptionCheck::empty_or_duplicate));
  CHECK_FALSE(report.has(t.key(), CaptionCheck::word_count));
  CHECK(report.has(mi.key(), CaptionCheck::word_count));
  CHECK_FALSE(report.has(mi.key(), CaptionCheck::label_mention));
  CHECK(report.has(absent.key(), CaptionCheck::missing_entry));

  CaptionBank good({"g", "t", 1}, {{t.key(), {"Chest radiograph demonstrating pneumonia."}}});
  std::vector<LabelInfoTriplet> only{t};
  CHECK(validate_caption_bank(good, only).ok());
  CHECK_FALSE(validate_caption_bank(bank, ts, rules).to_json().empty());
}

TEST_CASE("http client speaks chat completions and reads the key from the environment") {
  httplib::Server server;
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "1. hello there"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("FORGE_TEST_LLM_KEY", "sk-test-123", 1);
  HttpClientConfig config;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port);
  config.model = "test-model";
  config.api_key_env = "FORGE_TEST_LLM_KEY";
  config.seed = 7;
  config.timeout_seconds = 5;
  HttpLlmClient client(config);
  CHECK(client.complete("prompt text") == "1. hello there");
  CHECK(seen_auth == "Bearer sk-test-123");
  CHECK(seen_body["model"] == "test-model");
  CHECK(seen_body["seed"] == 7);
  CHECK(seen_body["temperature"] == 0.0);
  CHECK(seen_body["messages"][0]["content"] == "prompt text");

  config.path = "/broken";
  HttpLlmClient broken(config);
  CHECK_THROWS_WITH_AS(broken.complete("x"), doctest::Contains("503"), Error);

  server.stop();
  th.join();
  ::unsetenv("FORGE_TEST_LLM_KEY");

  HttpClientConfig missing;
  missing.model = "m";
  CHECK_THROWS_AS(HttpLlmClient{missing}, ConfigError);
}
