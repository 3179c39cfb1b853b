/*
 * Copyright 2026 The fedselect Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// L-smoothness descent check:
//   F(theta') <= F(theta) + grad F(theta)^T (theta' - theta) + L/2 ||theta' - theta||^2.
// The slack (RHS - LHS) is nonnegative whenever L is a valid smoothness
// constant for F.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "fedselect/common.hpp"
#include "fedselect/fl_engine.hpp"

namespace fedselect::sim {

/// Slack below this is reported as a violation.
inline constexpr double kDescentTolerance = -1e-8;

inline double descent_diagnostic(std::span<const double> theta_t, std::span<const double> theta_t1,
                                 std::span<const double> full_gradient_t, double smoothness, double loss_t,
                                 double loss_t1) {
  if (theta_t.size() != theta_t1.size() || theta_t.size() != full_gradient_t.size())
    throw DomainError("descent diagnostic inputs differ in length");
  double inner = 0.0, step_sq = 0.0;
  for (std::size_t i = 0; i < theta_t.size(); ++i) {
    const double d = theta_t1[i] - theta_t[i];
    inner += full_gradient_t[i] * d;
    step_sq += d * d;
  }
  return loss_t + inner + 0.5 * smoothness * step_sq - loss_t1;
}

/// F(theta) = 1/2 theta^T A theta - b^T theta with A symmetric PSD; L is the
/// largest eigenvalue of A.
struct QuadraticObjective {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;

  double value(const Eigen::VectorXd& theta) const { return 0.5 * theta.dot(a * theta) - b.dot(theta); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const { return a * theta - b; }
  double smoothness() const { return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().maxCoeff(); }

  /// Q diag(eigenvalues) Q^T with Q a seeded random orthogonal matrix.
  static QuadraticObjective with_spectrum(std::span<const double> eigenvalues, std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(eigenvalues.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd lambda(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      lambda(i) = eigenvalues[static_cast<std::size_t>(i)];
      b(i) = normal(rng);
    }
    QuadraticObjective obj;
    obj.a = q * lambda.asDiagonal() * q.transpose();
    obj.a = 0.5 * (obj.a + obj.a.transpose());
    obj.b = b;
    return obj;
  }
};

/// Gradient descent on a quadratic, returning the per-step slack under `smoothness`.
inline std::vector<double> quadratic_descent_slacks(const QuadraticObjective& f, Eigen::VectorXd theta,
                                                    double learning_rate, std::size_t rounds, double smoothness) {
  std::vector<double> slacks;
  slacks.reserve(rounds);
  for (std::size_t t = 0; t < rounds; ++t) {
    const Eigen::VectorXd g = f.gradient(theta);
    const Eigen::VectorXd next = theta - learning_rate * g;
    slacks.push_back(descent_diagnostic(std::span(theta.data(), static_cast<std::size_t>(theta.size())),
                                        std::span(next.data(), static_cast<std::size_t>(next.size())),
                                        std::span(g.data(), static_cast<std::size_t>(g.size())), smoothness,
                                        f.value(theta), f.value(next)));
    theta = next;
  }
  return slacks;
}

/// Upper bound on the smoothness constant of the mean softmax cross-entropy
/// of a linear model: the logit Hessian is bounded by I/2, so
/// L <= lambda_max(mean x~ x~^T) / 2 + l2 with x~ = (x, 1).
inline double logistic_smoothness_bound(const fl::Dataset& ds, double l2) {
  const auto d = static_cast<Eigen::Index>(ds.dim + 1);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd x(d);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    for (Eigen::Index k = 0; k + 1 < d; ++k) x(k) = r[static_cast<std::size_t>(k)];
    x(d - 1) = 1.0;
    cov.noalias() += x * x.transpose();
  }
  cov /= static_cast<double>(ds.size());
  return 0.5 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff() + l2;
}

/// Full-batch gradient descent on the pooled training set, step 1/L. The
/// reference ("central") loss for time-to-loss comparisons.
inline double central_baseline_loss(const fl::Model& init, const fl::Dataset& train, std::size_t iterations) {
  fl::Model m = init;
  const double step = init.architecture == fl::Architecture::logistic
                          ? 1.0 / logistic_smoothness_bound(train, init.l2)
                          : 0.1;
  const auto idx = fl::all_indices(train);
  for (std::size_t it = 0; it < iterations; ++it) {
    auto lg = fl::loss_and_gradient(m, train, idx);
    for (std::size_t i = 0; i < m.size(); ++i) m.parameters[i] -= step * lg.gradient[i];
  }
  return fl::evaluate(m, train).loss;
}

}  // namespace fedselect::sim
