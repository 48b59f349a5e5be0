// Copyright 2026 The clipvq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "clipvq/numerics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : engine_(SplitMix64(seed)) {}

Rng Rng::Stream(uint64_t seed, uint64_t a, uint64_t b) {
  return Rng(SplitMix64(SplitMix64(SplitMix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL)));
}

double Rng::Uniform() {
  const uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::Normal() { return normal_(engine_); }

double Rng::Gumbel() { return -std::log(-std::log(Uniform())); }

int Rng::Categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0)) throw ArgumentError("Categorical: no positive mass");
  const double u = Uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

int Rng::UniformInt(int n) {
  if (n <= 0) throw ArgumentError("UniformInt: n must be positive");
  return static_cast<int>(Uniform() * n) % n;
}

Vector LogSoftmax(const Vector& v) {
  if (v.size() == 0) throw ArgumentError("LogSoftmax: empty input");
  const double max = v.maxCoeff();
  const double log_sum = std::log((v.array() - max).exp().sum());
  return (v.array() - max - log_sum).matrix();
}

Vector Softmax(const Vector& v) {
  if (v.size() == 0) throw ArgumentError("Softmax: empty input");
  Vector e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Matrix PsdSqrt(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw ArgumentError("PsdSqrt: matrix is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", expected square");
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (m.size() > 0 && asym > 1e-9) {
    throw ArgumentError("PsdSqrt: asymmetry " + std::to_string(asym) +
                        " exceeds 1e-9");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  Vector evals = solver.eigenvalues();
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals[i] < -1e-9) {
      throw ArgumentError("PsdSqrt: eigenvalue " + std::to_string(evals[i]) +
                          " below -1e-9");
    }
    evals[i] = std::sqrt(std::max(evals[i], 0.0));
  }
  const Matrix& vecs = solver.eigenvectors();
  return vecs * evals.asDiagonal() * vecs.transpose();
}

AdamState::AdamState(size_t num_params, AdamConfig config)
    : config_(config),
      first_moment_(num_params, 0.0),
      second_moment_(num_params, 0.0) {}

void AdamState::Step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != first_moment_.size() ||
      grads.size() != first_moment_.size()) {
    throw ArgumentError("AdamState::Step: expected " +
                        std::to_string(first_moment_.size()) +
                        " parameters, got params=" +
                        std::to_string(params.size()) +
                        " grads=" + std::to_string(grads.size()));
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    first_moment_[i] = b1 * first_moment_[i] + (1.0 - b1) * g;
    second_moment_[i] = b2 * second_moment_[i] + (1.0 - b2) * g * g;
    const double m_hat = first_moment_[i] / c1;
    const double v_hat = second_moment_[i] / c2;
    params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

GradCheckReport FiniteDiffReport(const ScalarFn& f,
                                 std::span<const double> analytic_grad,
                                 std::span<const double> point, double h) {
  if (analytic_grad.size() != point.size()) {
    throw ArgumentError("FiniteDiffCheck: gradient/point size mismatch");
  }
  std::vector<double> x(point.begin(), point.end());
  GradCheckReport report;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("FiniteDiffCheck: non-finite value at component " +
                            std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double rel =
        std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (i == 0 || rel > report.max_rel_error) {
      report = {rel, i, a, numeric};
    }
  }
  return report;
}

double FiniteDiffCheck(const ScalarFn& f, std::span<const double> analytic_grad,
                       std::span<const double> point, double h) {
  return FiniteDiffReport(f, analytic_grad, point, h).max_rel_error;
}

}  // namespace clipvq
