// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "forge/caption.hpp"
#include "forge/error.hpp"
#include "forge/text_util.hpp"
#include "forge/trainer.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

oracle::Rows to_rows(const Eigen::MatrixXd& m) {
  oracle::Rows rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return rows;
}

EmbeddingBatch random_batch(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  return {testing_util::unit_rows(testing_util::gaussian(n, d, rng)),
          testing_util::unit_rows(testing_util::gaussian(n, d, rng))};
}

bool close_relative(double analytic, double numeric) {
  return std::abs(analytic - numeric) <= 1e-4 * std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct SmallRun {
  testing_util::TempDir dir;
  testing_util::FixturePipeline pipeline;
  CaptionBank bank;
  TrainingConfig config;
};

std::unique_ptr<SmallRun> small_run(int captions, std::uint64_t seed) {
  auto run = std::make_unique<SmallRun>();
  FixtureSpec spec;
  spec.modalities = {ModalityTag::XRAY};
  spec.classes_per_modality = 3;
  spec.rows_per_class = 40;
  spec.seed = seed;
  run->pipeline = testing_util::build_pipeline(spec, run->dir.path());
  run->bank = offline_caption_bank(run->pipeline.triplets, captions, seed);
  run->config.batch_size = 120;
  run->config.learning_rate = 0.01;
  run->config.warmup_iters = 20;
  run->config.max_steps = 200;
  run->config.seed = seed;
  return run;
}

}  // namespace

TEST_CASE("inline captions pass through without consuming the rng") {
  SampleRecord r{"s/1", "x#0", "s", ModalityTag::FUNDUS, InlineCaption{"fundus photo, glaucoma"}};
  Rng rng(5);
  Rng untouched(5);
  CHECK(sample_caption(r, nullptr, rng) == "fundus photo, glaucoma");
  CHECK(rng == untouched);
}

TEST_CASE("bank draws: single caption always, unknown key errors") {
  LabelInfoTriplet t("glaucoma", "fundus");
  CaptionBank bank({"g", "t", 1}, {{t.key(), {"only caption"}}});
  SampleRecord r{"s/1", "x#0", "s", ModalityTag::FUNDUS, BankRef{t.key()}};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) CHECK(sample_caption(r, &bank, rng) == "only caption");
  SampleRecord dangling{"s/2", "x#1", "s", ModalityTag::FUNDUS, BankRef{"nope"}};
  CHECK_THROWS_AS(sample_caption(dangling, &bank, rng), Error);
  CHECK_THROWS_AS(sample_caption(r, nullptr, rng), Error);
}

TEST_CASE("normalization of rows") {
  Eigen::MatrixXd raw(2, 2);
  raw << 3, 4, 0.6, 0.8;
  auto n = l2_normalize_rows(raw);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(n(1, 0) - 0.6) < 1e-6);
  raw.row(1).setZero();
  CHECK_THROWS_WITH_AS(l2_normalize_rows(raw), doctest::Contains("batch index 1"), Error);
}

TEST_CASE("normalization backward matches finite differences") {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd raw = testing_util::gaussian(3, 4, rng);
  Eigen::MatrixXd w = testing_util::gaussian(3, 4, rng);
  auto f = [&](const Eigen::MatrixXd& x) { return (l2_normalize_rows(x).array() * w.array()).sum(); };
  auto g = l2_normalize_rows_backward(raw, w);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      auto numeric = oracle::central_difference(
          [&](double x) {
            Eigen::MatrixXd m = raw;
            m(i, j) = x;
            return f(m);
          },
          raw(i, j), 1e-5);
      CHECK(close_relative(g(i, j), numeric));
    }
  }
}

TEST_CASE("embedding produces unit rows of dimension d") {
  auto enc = make_reference_encoders(6, 5, 64, 1);
  std::mt19937_64 rng(4);
  Eigen::MatrixXd x = testing_util::gaussian(3, 6, rng);
  std::vector<std::string> caps{"a chest film", "brain mri scan", "retina"};
  auto b = embed_and_normalize(x, caps, enc);
  CHECK(b.image.cols() == 5);
  CHECK(b.text.cols() == 5);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(std::abs(b.image.row(i).norm() - 1.0) < 1e-6);
    CHECK(std::abs(b.text.row(i).norm() - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(make_reference_encoders(6, 1, 64, 1), Error);
}

TEST_CASE("encoder backward passes match finite differences") {
  auto enc = make_reference_encoders(4, 3, 16, 9);
  std::mt19937_64 rng(6);
  Eigen::MatrixXd x = testing_util::gaussian(2, 4, rng);
  Eigen::MatrixXd w = testing_util::gaussian(2, 3, rng);
  std::vector<std::string> caps{"edema in the lungs", "normal study"};

  std::vector<double> gv(enc.vision().parameters().size(), 0.0);
  enc.vision().backward(x, w, gv);
  for (std::size_t k = 0; k < gv.size(); ++k) {
    auto p = enc.vision().parameters();
    const double saved = p[k];
    auto numeric = oracle::central_difference(
        [&](double v) {
          p[k] = v;
          return (enc.vision().forward(x).array() * w.array()).sum();
        },
        saved, 1e-5);
    p[k] = saved;
    CHECK(close_relative(gv[k], numeric));
  }

  std::vector<double> gt(enc.text().parameters().size(), 0.0);
  enc.text().backward(caps, w, gt);
  for (std::size_t k = 0; k < gt.size(); ++k) {
    auto p = enc.text().parameters();
    const double saved = p[k];
    auto numeric = oracle::central_difference(
        [&](double v) {
          p[k] = v;
          return (enc.text().forward(caps).array() * w.array()).sum();
        },
        saved, 1e-5);
    p[k] = saved;
    CHECK(std::abs(gt[k] - numeric) <= 1e-4 * std::max({std::abs(gt[k]), std::abs(numeric), 1e-6}));
  }
}

TEST_CASE("tokenizer and hashed bag of words") {
  CHECK(tokenize("T2-FLAIR, Édema!") == std::vector<std::string>{"t2", "flair", "\xc3\x89" "dema"});
  auto bow = hashed_bag_of_words("lung lung nodule", 1024);
  double norm = 0.0;
  for (auto& [b, w] : bow) norm += w * w;
  CHECK(norm == doctest::Approx(1.0));
  CHECK(std::is_sorted(bow.begin(), bow.end()));
  CHECK(hashed_bag_of_words("  ,. ", 1024).empty());
}

TEST_CASE("single-pair batch has zero loss") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    auto b = random_batch(1, 4, rng);
    auto loss = contrastive_loss(b, 0.07);
    CHECK(loss.loss == 0.0);
    CHECK_FALSE(std::signbit(loss.loss));
  }
}

TEST_CASE("two-pair identity batch matches the hand value") {
  EmbeddingBatch b{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  auto loss = contrastive_loss(b, 1.0);
  auto o = oracle::contrastive_loss(to_rows(b.image), to_rows(b.text), 1.0);
  CHECK(o.total() == doctest::Approx(0.31326).epsilon(1e-4));
  CHECK(std::abs(loss.loss - 0.31326) < 1e-4);
  CHECK(std::abs(loss.loss - o.total()) < 1e-12);
  CHECK(loss.similarity.isApprox(Eigen::MatrixXd::Identity(2, 2)));
}

TEST_CASE("loss matches the independent oracle and is non-negative") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    auto n = 1 + static_cast<Eigen::Index>(rng() % 5);
    auto d = 2 + static_cast<Eigen::Index>(rng() % 7);
    double tau = std::array{0.05, 0.1, 1.0}[rng() % 3];
    auto b = random_batch(n, d, rng);
    auto loss = contrastive_loss(b, tau);
    auto o = oracle::contrastive_loss(to_rows(b.image), to_rows(b.text), tau);
    CHECK(std::abs(loss.image_to_text - o.image_to_text) < 1e-9);
    CHECK(std::abs(loss.text_to_image - o.text_to_image) < 1e-9);
    CHECK(std::abs(loss.loss - o.total()) < 1e-9);
    CHECK(loss.loss >= 0.0);
  }
}

TEST_CASE("joint permutation leaves the loss unchanged") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto n = 2 + static_cast<Eigen::Index>(trial % 3);
    auto b = random_batch(n, 5, rng);
    const double base = contrastive_loss(b, 0.1).loss;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      EmbeddingBatch p{b.image, b.text};
      for (Eigen::Index i = 0; i < n; ++i) {
        p.image.row(i) = b.image.row(perm[static_cast<std::size_t>(i)]);
        p.text.row(i) = b.text.row(perm[static_cast<std::size_t>(i)]);
      }
      CHECK(std::abs(contrastive_loss(p, 0.1).loss - base) < 1e-9);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("swapping image and text swaps the directional terms") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    auto n = 1 + static_cast<Eigen::Index>(rng() % 8);
    auto b = random_batch(n, 6, rng);
    auto forward = contrastive_loss(b, 0.2);
    auto swapped = contrastive_loss(EmbeddingBatch{b.text, b.image}, 0.2);
    CHECK(std::abs(forward.image_to_text - swapped.text_to_image) < 1e-12);
    CHECK(std::abs(forward.text_to_image - swapped.image_to_text) < 1e-12);
    CHECK(std::abs(forward.loss - swapped.loss) < 1e-12);
  }
}

TEST_CASE("loss approaches zero for aligned, anti-aligned pairs as tau shrinks") {
  Eigen::MatrixXd v(2, 2);
  v << 1, 0, -1, 0;
  EmbeddingBatch b{v, v};
  double prev = contrastive_loss(b, 1.0).loss;
  for (double tau : {0.5, 0.1, 0.05, 0.01}) {
    double cur = contrastive_loss(b, tau).loss;
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 1e-50);
}

TEST_CASE("loss rejects non-unit rows and non-positive temperature") {
  std::mt19937_64 rng(3);
  auto b = random_batch(3, 4, rng);
  CHECK_THROWS_AS(contrastive_loss(b, 0.0), Error);
  CHECK_THROWS_AS(contrastive_loss(b, -1.0), Error);
  b.image(1, 0) += 1e-3;
  CHECK_THROWS_AS(contrastive_loss(b, 0.1), Error);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    auto n = 1 + static_cast<Eigen::Index>(rng() % 6);
    auto d = 2 + static_cast<Eigen::Index>(rng() % 7);
    auto b = random_batch(n, d, rng);
    const double log_tau = std::log(std::array{0.05, 0.1, 1.0}[trial % 3]);
    ContrastiveGradients g;
    contrastive_objective(b.image, b.text, log_tau, &g);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        auto dv = oracle::central_difference(
            [&](double x) {
              Eigen::MatrixXd v = b.image;
              v(i, j) = x;
              return contrastive_objective(v, b.text, log_tau).loss;
            },
            b.image(i, j), 1e-5);
        auto dt = oracle::central_difference(
            [&](double x) {
              Eigen::MatrixXd t = b.text;
              t(i, j) = x;
              return contrastive_objective(b.image, t, log_tau).loss;
            },
            b.text(i, j), 1e-5);
        CHECK(close_relative(g.image(i, j), dv));
        CHECK(close_relative(g.text(i, j), dt));
      }
    }
    auto dlt = oracle::central_difference(
        [&](double x) { return contrastive_objective(b.image, b.text, x).loss; }, log_tau, 1e-5);
    CHECK(close_relative(g.log_temperature, dlt));
  }
}

TEST_CASE("learning-rate schedule") {
  TrainingConfig c;
  CHECK(lr_at_step(0, c, 10000) == 0.0);
  CHECK(lr_at_step(2000, c, 10000) == 5e-5);
  CHECK(std::abs(lr_at_step(10000, c, 10000)) < 1e-12);
  CHECK(lr_at_step(1000, c, 10000) == doctest::Approx(2.5e-5));
  CHECK(lr_at_step(6000, c, 10000) == doctest::Approx(2.5e-5));
  double prev = lr_at_step(2000, c, 10000);
  for (std::int64_t s = 2001; s <= 10000; s += 97) {
    double cur = lr_at_step(s, c, 10000);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS_AS(lr_at_step(0, c, 1000), Error);
  CHECK_THROWS_AS(lr_at_step(10001, c, 10000), Error);
  CHECK_THROWS_AS(lr_at_step(-1, c, 10000), Error);
  c.warmup_iters = 0;
  CHECK(lr_at_step(0, c, 100) == 5e-5);
}

TEST_CASE("training config defaults and validation") {
  TrainingConfig c;
  CHECK(c.learning_rate == 5e-5);
  CHECK(c.warmup_iters == 2000);
  CHECK(c.epochs == 10);
  CHECK(c.batch_size == 128);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.warmup_iters = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.temperature_init = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto other = c;
  other.seed = 1;
  CHECK(other.hash() != c.hash());
}

TEST_CASE("batch plan") {
  TrainingConfig c;
  c.batch_size = 32;
  c.epochs = 3;
  auto p = plan_batches(100, c);
  CHECK(p.batch == 32);
  CHECK(p.steps_per_epoch == 3);
  CHECK(p.total_steps == 9);
  c.max_steps = 5;
  CHECK(plan_batches(100, c).total_steps == 5);
  c.batch_size = 500;
  CHECK(plan_batches(100, c).batch == 100);
}

TEST_CASE("training drives the loss below a tenth of its start") {
  auto run = small_run(10, 1);
  run->config.temperature_init = 0.01;
  run->config.temperature_learnable = false;
  run->config.embed_dim = 4;
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 1);
  auto r = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config);
  REQUIRE(r.metrics.size() == 200);
  const double initial = r.metrics.front().loss;
  const double final_loss = r.metrics.back().loss;
  CHECK(final_loss < initial);
  CHECK(final_loss < 0.1 * initial);
  for (const auto& m : r.metrics) CHECK(m.temperature == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("seeded training is reproducible and temperature stays clamped") {
  auto run = small_run(3, 2);
  run->config.batch_size = 16;
  run->config.max_steps = 60;
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 2);
  auto a = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config);
  auto b = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config);
  CHECK(metrics_jsonl(a.metrics) == metrics_jsonl(b.metrics));
  CHECK(a.state == b.state);
  for (const auto& m : a.metrics) {
    CHECK(m.temperature >= kMinTemperature);
    CHECK(m.temperature <= kMaxTemperature);
  }

  run->config.learning_rate = 5.0;  // pushes log-temperature hard into the clamp
  auto wild = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config);
  for (const auto& m : wild.metrics) {
    CHECK(m.temperature >= kMinTemperature);
    CHECK(m.temperature <= kMaxTemperature);
  }
}

TEST_CASE("excluding every source is an error") {
  auto run = small_run(1, 3);
  run->config.source_exclusions = {fixture_source_name(ModalityTag::XRAY)};
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 3);
  CHECK_THROWS_WITH_AS(train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config),
                       doctest::Contains("empty post-exclusion manifest"), Error);
}

TEST_CASE("missing bank entries are caught before training") {
  auto run = small_run(1, 4);
  CaptionBank partial({"g", "t", 1}, {{run->pipeline.triplets.front().key(), {"a caption here"}}});
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 4);
  CHECK_THROWS_AS(train_loop(run->pipeline.manifest, &partial, *run->pipeline.store, enc, run->config), Error);
}

TEST_CASE("non-finite loss aborts with the step number") {
  auto run = small_run(1, 5);
  run->config.max_steps = 5;
  run->config.warmup_iters = 0;
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 5);
  auto params = enc.vision().parameters();
  std::fill(params.begin(), params.end(), std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config),
                       doctest::Contains("step 1"), Error);
}

TEST_CASE("checkpoint round trip, resume and corruption") {
  auto run = small_run(3, 6);
  run->config.batch_size = 16;
  run->config.max_steps = 40;
  auto enc = make_reference_encoders(32, run->config.embed_dim, run->config.text_buckets, 6);
  TrainOptions opts;
  opts.checkpoint_dir = run->dir / "ckpt";
  opts.checkpoint_interval = 20;
  auto full = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config, opts);
  REQUIRE(full.checkpoints.size() == 3);

  auto mid_path = run->dir / "ckpt" / "checkpoint-00000020.bin";
  auto mid = load_checkpoint(mid_path);
  CHECK(mid.step == 20);
  save_checkpoint(mid, run->dir / "copy.bin");
  CHECK(load_checkpoint(run->dir / "copy.bin") == mid);

  TrainOptions resume;
  resume.resume_from = mid_path;
  auto tail = train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, run->config, resume);
  REQUIRE(tail.metrics.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(tail.metrics[i].step == full.metrics[i + 20].step);
    CHECK(std::abs(tail.metrics[i].loss - full.metrics[i + 20].loss) <= 1e-9);
  }
  CHECK(tail.state == full.state);

  auto bytes = read_file(mid_path.string(), "t", "t");
  write_file_atomic((run->dir / "trunc.bin").string(), bytes.substr(0, bytes.size() - 7), "t", "t");
  CHECK_THROWS_AS(load_checkpoint(run->dir / "trunc.bin"), IntegrityError);
  auto flipped = bytes;
  flipped[flipped.size() - 30] ^= 0x01;
  write_file_atomic((run->dir / "flip.bin").string(), flipped, "t", "t");
  CHECK_THROWS_AS(load_checkpoint(run->dir / "flip.bin"), IntegrityError);

  auto changed = run->config;
  changed.learning_rate *= 2;
  CHECK_THROWS_AS(train_loop(run->pipeline.manifest, &run->bank, *run->pipeline.store, enc, changed, resume), Error);
}

TEST_CASE("metrics log is one JSON object per step") {
  std::vector<StepMetrics> m{{1, 0.1, 2.0, 0.07}, {2, 0.2, 1.5, 0.07}};
  auto text = metrics_jsonl(m);
  auto lines = split(text, '\n');
  REQUIRE(lines.size() >= 2);
  auto j = nlohmann::json::parse(lines[1]);
  CHECK(j["step"] == 2);
  CHECK(j["loss"] == 1.5);
  CHECK(j.contains("lr"));
  CHECK(j.contains("temperature"));
}
