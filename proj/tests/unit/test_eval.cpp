// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <map>

#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

// Returns a fixed vector per exact prompt; unknown prompts map to zero.
class TableTextEncoder : public TextEncoder {
 public:
  explicit TableTextEncoder(std::map<std::string, Eigen::VectorXd> table, Eigen::Index dim)
      : table_(std::move(table)), dim_(dim) {}
  std::unique_ptr<TextEncoder> clone() const override { return std::make_unique<TableTextEncoder>(*this); }
  Eigen::Index output_dim() const override { return dim_; }
  Eigen::MatrixXd forward(std::span<const std::string> captions) const override {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(captions.size()), dim_);
    for (std::size_t i = 0; i < captions.size(); ++i) {
      if (auto it = table_.find(captions[i]); it != table_.end()) out.row(static_cast<Eigen::Index>(i)) = it->second;
    }
    return out;
  }
  void backward(std::span<const std::string>, const Eigen::MatrixXd&, std::span<double>) const override {}
  std::span<double> parameters() override { return {}; }
  std::span<const double> parameters() const override { return {}; }
  nlohmann::ordered_json describe() const override { return {{"kind", "table"}}; }

 private:
  std::map<std::string, Eigen::VectorXd> table_;
  Eigen::Index dim_;
};

oracle::Rows rows_of(const Eigen::MatrixXd& m) {
  oracle::Rows r(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return r;
}

}  // namespace

TEST_CASE("single-template head is the normalized prompt embedding") {
  auto enc = make_reference_encoders(4, 6, 128, 2);
  std::vector<std::string> classes{"edema", "pneumonia", "normal"};
  std::vector<std::string> one{"A chest X-ray showing {}."};
  auto head = build_zeroshot_head(classes, one, enc.text());
  REQUIRE(head.weights.rows() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::string> prompt{"A chest X-ray showing " + classes[c] + "."};
    Eigen::RowVectorXd e = enc.text().forward(prompt).row(0).normalized();
    CHECK((head.weights.row(static_cast<Eigen::Index>(c)) - e).norm() < 1e-12);
    CHECK(std::abs(head.weights.row(static_cast<Eigen::Index>(c)).norm() - 1.0) < 1e-6);
  }
  CHECK(head.class_names == classes);
}

TEST_CASE("identical templates give exactly the single-template head") {
  auto enc = make_reference_encoders(4, 6, 128, 3);
  std::vector<std::string> classes{"a", "b"};
  std::vector<std::string> one{"scan of {}"};
  auto single = build_zeroshot_head(classes, one, enc.text());
  for (std::size_t copies : {2u, 3u, 8u}) {
    std::vector<std::string> many(copies, one[0]);
    CHECK(build_zeroshot_head(classes, many, enc.text()).weights == single.weights);
  }
}

TEST_CASE("head construction errors") {
  auto enc = make_reference_encoders(4, 6, 128, 3);
  std::vector<std::string> classes{"a"};
  std::vector<std::string> no_slot{"a scan"};
  CHECK_THROWS_AS(build_zeroshot_head(classes, no_slot, enc.text()), Error);
  std::vector<std::string> none;
  CHECK_THROWS_AS(build_zeroshot_head(classes, none, enc.text()), Error);

  Eigen::VectorXd e(2);
  e << 0.3, 0.7;
  TableTextEncoder opposed({{"up x", e}, {"down x", -e}}, 2);
  std::vector<std::string> cls{"x"};
  std::vector<std::string> templates{"up {}", "down {}"};
  CHECK_THROWS_WITH_AS(build_zeroshot_head(cls, templates, opposed), doctest::Contains("'x'"), Error);
}

TEST_CASE("prediction of an embedding equal to a head row") {
  ZeroShotHead head;
  head.class_names = {"a", "b", "c"};
  head.weights = testing_util::unit_rows(Eigen::MatrixXd::Random(3, 4));
  auto pred = zeroshot_predict(head.weights.row(1), head);
  CHECK(pred.predictions[0] == 1);
  CHECK(pred.scores(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(zeroshot_predict(Eigen::MatrixXd::Ones(1, 5), head), Error);
}

TEST_CASE("ties go to the lowest class index") {
  ZeroShotHead head;
  head.class_names = {"a", "b"};
  head.weights = Eigen::MatrixXd(2, 2);
  head.weights << 1, 0, 1, 0;
  Eigen::MatrixXd img(1, 2);
  img << 1, 0;
  CHECK(zeroshot_predict(img, head).predictions[0] == 0);
}

TEST_CASE("prediction matches a double-loop cosine oracle and is scale invariant") {
  std::mt19937_64 rng(14);
  auto enc = make_reference_encoders(5, 6, 64, 7);
  for (int trial = 0; trial < 50; ++trial) {
    ZeroShotHead head;
    head.class_names = {"a", "b", "c"};
    head.weights = testing_util::unit_rows(testing_util::gaussian(3, 6, rng));
    Eigen::MatrixXd raw = testing_util::gaussian(5, 6, rng);
    auto pred = zeroshot_predict(testing_util::unit_rows(raw), head);
    auto scaled = zeroshot_predict(testing_util::unit_rows(7.0 * raw), head);
    ZeroShotHead big = head;
    big.weights *= 3.5;
    auto big_pred = zeroshot_predict(testing_util::unit_rows(raw), big);
    auto classes = rows_of(head.weights);
    for (Eigen::Index i = 0; i < 5; ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j < 6; ++j) row.push_back(raw(i, j));
      CHECK(pred.predictions[static_cast<std::size_t>(i)] == oracle::cosine_argmax(row, classes));
    }
    CHECK(pred.predictions == scaled.predictions);
    CHECK(pred.predictions == big_pred.predictions);
  }
}

TEST_CASE("accuracy") {
  std::vector<int> y{0, 1, 2, 1};
  std::vector<int> all = y;
  std::vector<int> none{1, 2, 0, 0};
  std::vector<int> three{0, 1, 2, 2};
  CHECK(compute_accuracy(all, y) == 100.0);
  CHECK(compute_accuracy(none, y) == 0.0);
  CHECK(compute_accuracy(three, y) == 75.0);
  std::vector<int> empty;
  CHECK_THROWS_AS(compute_accuracy(empty, empty), Error);
}

TEST_CASE("auc hand cases") {
  std::vector<double> s{0.9, 0.1};
  std::vector<int> y{1, 0};
  CHECK(compute_auc(s, y) == 100.0);
  std::vector<int> flipped{0, 1};
  CHECK(compute_auc(s, flipped) == 0.0);
  std::vector<double> s4{0.8, 0.6, 0.6, 0.2};
  std::vector<int> y4{1, 0, 1, 0};
  CHECK(compute_auc(s4, y4) == 87.5);
  CHECK(oracle::auc_by_pairs(s4, y4) == 87.5);
  std::vector<int> one_class{1, 1};
  CHECK_THROWS_AS(compute_auc(s, one_class), Error);
}

TEST_CASE("auc is invariant under monotone transforms") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng() % 30;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(g(rng) * 4.0) / 4.0;  // coarse values to force ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double base = compute_auc(s, y);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) + 2.0;
    CHECK(compute_auc(t, y) == base);
  }
}

TEST_CASE("score_metric uses the positive margin for auc") {
  Eigen::MatrixXd scores(4, 2);
  scores << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7;
  std::vector<int> y{0, 1, 0, 1};
  CHECK(score_metric(Metric::AUC, scores, y) == 100.0);
  CHECK(score_metric(Metric::ACC, scores, y) == 100.0);
  Eigen::MatrixXd three(1, 3);
  std::vector<int> one{0};
  CHECK_THROWS_AS(score_metric(Metric::AUC, three, one), Error);
}

TEST_CASE("stratified subsample arithmetic") {
  std::vector<int> labels(1000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  auto idx = stratified_subsample(labels, 2, 0.10, 1);
  CHECK(idx.size() == 100);
  std::size_t ones = 0;
  for (auto i : idx) ones += static_cast<std::size_t>(labels[i]);
  CHECK(ones == 50);
  CHECK(stratified_subsample(labels, 2, 0.10, 1) == idx);
  CHECK(stratified_subsample(labels, 2, 1.0, 1).size() == 1000);
  std::vector<int> tiny{0, 1, 0, 1, 0};
  CHECK_THROWS_AS(stratified_subsample(tiny, 2, 0.2, 1), Error);
  CHECK_THROWS_AS(stratified_subsample(tiny, 2, 0.0, 1), Error);
}

TEST_CASE("logistic regression separates separable data") {
  std::mt19937_64 rng(10);
  Eigen::MatrixXd x = testing_util::gaussian(60, 3, rng);
  std::vector<int> y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    y[static_cast<std::size_t>(i)] = static_cast<int>(i % 3);
    x(i, i % 3) += 6.0;
  }
  auto clf = fit_logistic_regression(x, y, 3);
  Eigen::MatrixXd s = clf.scores(x);
  std::vector<int> pred(60);
  for (Eigen::Index i = 0; i < 60; ++i) s.row(i).maxCoeff(&pred[static_cast<std::size_t>(i)]);
  CHECK(compute_accuracy(pred, y) == 100.0);
  CHECK(clf.iterations <= 1000);
  Eigen::MatrixXd bad = x;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(fit_logistic_regression(bad, y, 3), Error);
}

TEST_CASE("linear probe: full fraction, determinism, infeasible stratification") {
  std::mt19937_64 rng(12);
  ProbeTask task;
  task.dataset = "toy";
  task.modality = ModalityTag::CT;
  task.classes = 2;
  task.train_features = testing_util::gaussian(40, 4, rng);
  task.test_features = testing_util::gaussian(20, 4, rng);
  for (Eigen::Index i = 0; i < 40; ++i) {
    task.train_labels.push_back(static_cast<int>(i % 2));
    task.train_features(i, 0) += i % 2 ? 5.0 : -5.0;
  }
  for (Eigen::Index i = 0; i < 20; ++i) {
    task.test_labels.push_back(static_cast<int>(i % 2));
    task.test_features(i, 0) += i % 2 ? 5.0 : -5.0;
  }
  auto full = linear_probe(task, 1.0, 3);
  CHECK(full.value == 100.0);
  CHECK(full.protocol == "linear_probe");
  REQUIRE(full.fraction.has_value());
  CHECK(*full.fraction == 1.0);
  CHECK(full.n == 20);
  auto tenth = linear_probe(task, 0.1, 3);
  CHECK(linear_probe(task, 0.1, 3).value == tenth.value);
  CHECK_THROWS_AS(linear_probe(task, 0.01, 3), Error);
  task.metric = Metric::AUC;
  auto auc = linear_probe(task, 1.0, 3);
  CHECK(auc.value == 100.0);
  CHECK(auc.metric == Metric::AUC);
}

TEST_CASE("modality report means") {
  std::vector<EvalResult> one{{"d1", ModalityTag::XRAY, Metric::ACC, 42.0, 10}};
  auto r1 = modality_report(one);
  CHECK(r1.modality_mean.at(ModalityTag::XRAY) == 42.0);
  std::vector<EvalResult> two{{"d1", ModalityTag::XRAY, Metric::ACC, 60.0, 10},
                              {"d2", ModalityTag::XRAY, Metric::AUC, 80.0, 10}};
  CHECK(modality_report(two).modality_mean.at(ModalityTag::XRAY) == 70.0);
  std::vector<EvalResult> grand{{"d1", ModalityTag::XRAY, Metric::ACC, 70.0, 10},
                                {"d2", ModalityTag::MRI, Metric::ACC, 50.0, 10}};
  auto r = modality_report(grand);
  CHECK(r.grand_mean.value() == 60.0);
  std::vector<EvalResult> mixed{{"d1", ModalityTag::XRAY, Metric::ACC, 60.0, 10},
                                {"d2", ModalityTag::XRAY, Metric::ACC, 80.0, 10},
                                {"d3", ModalityTag::MRI, Metric::ACC, 50.0, 10}};
  CHECK(modality_report(mixed).grand_mean.value() == doctest::Approx(190.0 / 3.0));
  CHECK_FALSE(modality_report(std::vector<EvalResult>{}).grand_mean.has_value());
  CHECK(r.to_markdown().find("XRAY") != std::string::npos);
  CHECK(r.to_json()["grand_mean"] == 60.0);
}

TEST_CASE("registry parsing is strict and resolves relative paths") {
  testing_util::TempDir dir;
  std::ofstream(dir / "reg.json") << R"([{"name": "cxr", "modality": "XRAY", "metric": "AUC",
    "classes": ["normal", "pneumonia"], "test_split_uri": "splits/test.csv"}])";
  auto reg = load_registry(dir / "reg.json");
  REQUIRE(reg.size() == 1);
  CHECK(reg[0].metric == Metric::AUC);
  CHECK(reg[0].test_split == dir / "splits/test.csv");
  CHECK_FALSE(reg[0].train_split.has_value());
  CHECK(reg[0].templates == default_templates(ModalityTag::XRAY));
  CHECK(reg[0].templates[0].find("{}") != std::string::npos);

  std::ofstream(dir / "typo.json") << R"([{"name": "x", "modality": "CT", "metric": "ACC",
    "classes": ["a"], "test_split_uri": "t.csv", "clases": []}])";
  CHECK_THROWS_WITH_AS(load_registry(dir / "typo.json"), doctest::Contains("clases"), ConfigError);
  std::ofstream(dir / "auc3.json") << R"([{"name": "x", "modality": "CT", "metric": "AUC",
    "classes": ["a", "b", "c"], "test_split_uri": "t.csv"}])";
  CHECK_THROWS_AS(load_registry(dir / "auc3.json"), ConfigError);
}

TEST_CASE("evaluate_dataset runs zero-shot then probes") {
  testing_util::TempDir dir;
  FeatureMatrix fm;
  fm.rows = 40;
  fm.dim = 2;
  std::ofstream train(dir / "train.csv");
  std::ofstream test(dir / "test.csv");
  train << "image_uri,label\n";
  test << "image_uri,label\n";
  for (std::size_t i = 0; i < 40; ++i) {
    const bool pos = i % 2;
    fm.data.push_back(pos ? 1.0f : -1.0f);
    fm.data.push_back(0.01f * static_cast<float>(i));
    (i < 30 ? train : test) << "f.f32#" << i << "," << (pos ? "Pos" : "neg") << "\n";
  }
  train.close();
  test.close();
  write_feature_matrix(fm, dir / "f.f32");
  DatasetEntry e{"toy", ModalityTag::US, Metric::ACC, {"neg", "pos"}, dir / "test.csv", dir / "train.csv",
                 default_templates(ModalityTag::US)};
  auto enc = make_reference_encoders(2, 4, 64, 1);
  FeatureStore store(dir.path());
  EvalOptions opts;
  opts.probe_fractions = {0.1, 1.0};
  auto results = evaluate_dataset(e, enc, store, opts);
  REQUIRE(results.size() == 3);
  CHECK(results[0].protocol == "zeroshot");
  CHECK(results[0].n == 10);
  CHECK(results[2].value == 100.0);
  for (const auto& r : results) {
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 100.0);
  }
  auto j = results[1].to_json();
  CHECK(j["dataset"] == "toy");
  CHECK(j["metric"] == "ACC");
  CHECK(j["fraction"] == 0.1);
}
