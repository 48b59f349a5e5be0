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

#ifndef CLIPVQ_NUMERICS_H_
#define CLIPVQ_NUMERICS_H_

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace clipvq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Deterministic random stream.
//
// Engine: std::mt19937_64 seeded with a SplitMix64-scrambled 64-bit seed.
// uniform() takes the top 53 bits of one engine word and centres them in
// their bucket, so it is strictly inside (0, 1). normal() uses
// std::normal_distribution (state kept in the Rng, so a copy of the Rng
// continues the identical sequence). Reproducible within one build; bit
// equality across standard libraries is not promised.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  // Independent stream keyed by (seed, a, b), e.g. (run seed, step, example).
  static Rng Stream(uint64_t seed, uint64_t a, uint64_t b = 0);

  uint64_t NextU64() { return engine_(); }
  double Uniform();
  double Normal();
  // Gumbel(0, 1): -log(-log U).
  double Gumbel();
  // Draws an index from a probability vector; mass need not be normalised
  // exactly but must be positive in total.
  int Categorical(std::span<const double> probs);
  int UniformInt(int n);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

uint64_t SplitMix64(uint64_t x);

// Max-subtracted log-softmax. Throws ArgumentError on empty input.
Vector LogSoftmax(const Vector& v);
Vector Softmax(const Vector& v);

// Principal square root of a symmetric PSD matrix via a self-adjoint
// eigendecomposition; eigenvalues in [-1e-9, 0) are clamped to zero.
Matrix PsdSqrt(const Matrix& m);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(size_t num_params, AdamConfig config);

  // One bias-corrected Adam update, in place.
  void Step(std::span<double> params, std::span<const double> grads);

  int64_t steps() const { return steps_; }
  size_t size() const { return first_moment_.size(); }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
  int64_t steps_ = 0;
};

using ScalarFn = std::function<double(std::span<const double>)>;

// Central-difference gradient compared against `analytic_grad`; returns the
// largest |a - b| / max(1e-8, |a| + |b|) over components.
double FiniteDiffCheck(const ScalarFn& f, std::span<const double> analytic_grad,
                       std::span<const double> point, double h);

// Same, but also reports the worst component.
struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};
GradCheckReport FiniteDiffReport(const ScalarFn& f,
                                 std::span<const double> analytic_grad,
                                 std::span<const double> point, double h);

inline std::span<const double> AsSpan(const Vector& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}
inline std::span<double> AsSpan(Vector& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

}  // namespace clipvq

#endif  // CLIPVQ_NUMERICS_H_
