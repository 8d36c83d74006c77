// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "forge/error.hpp"
#include "forge/eval.hpp"
#include "forge/hashing.hpp"

namespace forge {

namespace {

constexpr const char* kModule = "evaluator";

struct Objective {
  double value = 0.0;
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;
};

// Mean cross-entropy plus (l2 / 2) * ||W||^2.
Objective logistic_objective(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::MatrixXd& w,
                             const Eigen::VectorXd& b, double l2, bool with_grad) {
  const auto n = x.rows();
  Eigen::MatrixXd logits = x * w.transpose();
  logits.rowwise() += b.transpose();
  Objective out;
  Eigen::MatrixXd residual(with_grad ? n : 0, w.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    out.value += lse - logits(i, yi);
    if (with_grad) {
      residual.row(i) = (logits.row(i).array() - lse).exp().matrix();
      residual(i, yi) -= 1.0;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.value = out.value * inv_n + 0.5 * l2 * w.squaredNorm();
  if (with_grad) {
    out.grad_w = inv_n * residual.transpose() * x + l2 * w;
    out.grad_b = inv_n * residual.colwise().sum().transpose();
  }
  return out;
}

}  // namespace

std::vector<std::size_t> stratified_subsample(std::span<const int> labels, int classes, double fraction,
                                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(kModule, "stratified_subsample", "fraction must lie in (0, 1]");
  }
  if (classes < 1) throw Error(kModule, "stratified_subsample", "classes must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw Error(kModule, "stratified_subsample", "label out of range at index " + std::to_string(i));
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  const auto budget = static_cast<long long>(std::floor(fraction * static_cast<double>(labels.size())));
  if (budget < classes) {
    throw Error(kModule, "stratified_subsample",
                "fraction " + std::to_string(fraction) + " of " + std::to_string(labels.size()) +
                    " samples cannot cover " + std::to_string(classes) + " classes");
  }
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) {
      throw Error(kModule, "stratified_subsample", "class " + std::to_string(c) + " has no samples");
    }
    std::size_t take = members.size();
    if (fraction < 1.0) {
      take = static_cast<std::size_t>(
          std::max(1LL, std::llround(fraction * static_cast<double>(members.size()))));
      take = std::min(take, members.size());
      std::mt19937_64 rng(derive_seed(seed, c));
      std::shuffle(members.begin(), members.end(), rng);
    }
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

Eigen::MatrixXd LinearClassifier::scores(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd s = features * weights.transpose();
  s.rowwise() += bias.transpose();
  return s;
}

LinearClassifier fit_logistic_regression(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                         const ProbeOptions& options) {
  if (features.rows() == 0 || features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error(kModule, "fit_logistic_regression", "need one label per (non-empty) feature row");
  }
  if (!features.allFinite()) throw Error(kModule, "fit_logistic_regression", "features contain non-finite values");
  for (int y : labels) {
    if (y < 0 || y >= classes) throw Error(kModule, "fit_logistic_regression", "label out of range");
  }

  LinearClassifier model;
  model.weights = Eigen::MatrixXd::Zero(classes, features.cols());
  model.bias = Eigen::VectorXd::Zero(classes);
  auto current = logistic_objective(features, labels, model.weights, model.bias, options.l2, true);
  double step = 1.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const double grad_sq = current.grad_w.squaredNorm() + current.grad_b.squaredNorm();
    if (std::sqrt(grad_sq) < options.tolerance) {
      model.converged = true;
      break;
    }
    // Armijo backtracking; the step grows again after each accepted move.
    step *= 2.0;
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    double value = 0.0;
    while (true) {
      w = model.weights - step * current.grad_w;
      b = model.bias - step * current.grad_b;
      value = logistic_objective(features, labels, w, b, options.l2, false).value;
      if (value <= current.value - 1e-4 * step * grad_sq || step < 1e-12) break;
      step *= 0.5;
    }
    model.weights = std::move(w);
    model.bias = std::move(b);
    current = logistic_objective(features, labels, model.weights, model.bias, options.l2, true);
    model.iterations = it + 1;
  }
  return model;
}

EvalResult linear_probe(const ProbeTask& task, double fraction, std::uint64_t seed, const ProbeOptions& options) {
  if (task.test_labels.empty()) throw Error(kModule, "linear_probe", "empty test split");
  if (!task.test_features.allFinite()) throw Error(kModule, "linear_probe", "test features contain non-finite values");
  const auto picked = stratified_subsample(task.train_labels, task.classes, fraction, seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(picked.size()), task.train_features.cols());
  std::vector<int> y(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = task.train_features.row(static_cast<Eigen::Index>(picked[i]));
    y[i] = task.train_labels[picked[i]];
  }
  const auto model = fit_logistic_regression(x, y, task.classes, options);
  EvalResult result;
  result.dataset = task.dataset;
  result.modality = task.modality;
  result.metric = task.metric;
  result.value = score_metric(task.metric, model.scores(task.test_features), task.test_labels);
  result.n = task.test_labels.size();
  result.protocol = "linear_probe";
  result.fraction = fraction;
  return result;
}

}  // namespace forge
