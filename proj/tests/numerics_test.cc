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

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "clipvq/errors.h"
#include "clipvq/numerics.h"

namespace clipvq {
namespace {

TEST(LogSoftmax, SymmetricPair) {
  const Vector out = LogSoftmax(Vector::Zero(2));
  EXPECT_NEAR(out[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(out[1], -std::log(2.0), 1e-15);
}

TEST(LogSoftmax, LargeInputsDoNotOverflow) {
  const Vector out = LogSoftmax(Vector::Constant(2, 1000.0));
  EXPECT_NEAR(out[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(out[1], -std::log(2.0), 1e-15);
}

TEST(LogSoftmax, ThreeToOne) {
  Vector v(2);
  v << 0.0, std::log(3.0);
  const Vector out = LogSoftmax(v);
  // -ln 4 and ln 0.75 to 20 digits
  EXPECT_NEAR(out[0], -1.3862943611198906188, 1e-15);
  EXPECT_NEAR(out[1], -0.28768207245178092744, 1e-15);
}

TEST(LogSoftmax, EmptyThrows) {
  EXPECT_THROW(LogSoftmax(Vector()), ArgumentError);
  EXPECT_THROW(Softmax(Vector()), ArgumentError);
}

TEST(LogSoftmax, ExpSumsToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(1 + trial % 17);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 30.0 * rng.Normal();
    EXPECT_NEAR(LogSoftmax(v).array().exp().sum(), 1.0, 1e-12);
    const Vector p = Softmax(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-10);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(PsdSqrt, Identity) {
  EXPECT_LE((PsdSqrt(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PsdSqrt, Diagonal) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 4.0;
  m(1, 1) = 9.0;
  const Matrix s = PsdSqrt(m);
  EXPECT_NEAR(s(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(s(1, 1), 3.0, 1e-14);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-14);
}

TEST(PsdSqrt, ReconstructsRandomGram) {
  Rng rng(17);
  for (int dim : {1, 2, 8, 32, 64}) {
    Matrix a(dim, dim);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.Normal();
    const Matrix m = a * a.transpose();
    const Matrix s = PsdSqrt(m);
    EXPECT_LE((s * s - m).cwiseAbs().maxCoeff(), 1e-7) << "dim " << dim;
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PsdSqrt, RankDeficientClampsTinyNegatives) {
  Vector u(3);
  u << 1.0, -2.0, 0.5;
  const Matrix m = u * u.transpose();  // rank one, eigenvalues 0 up to rounding
  const Matrix s = PsdSqrt(m);
  EXPECT_TRUE(s.allFinite());
  EXPECT_LE((s * s - m).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(PsdSqrt, RejectsBadInput) {
  EXPECT_THROW(PsdSqrt(Matrix::Zero(2, 3)), ArgumentError);
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.1;
  EXPECT_THROW(PsdSqrt(asym), ArgumentError);
  Matrix neg = Matrix::Identity(2, 2);
  neg(1, 1) = -1.0;
  EXPECT_THROW(PsdSqrt(neg), ArgumentError);
}

TEST(Adam, ZeroGradientLeavesParams) {
  AdamState adam(3, {0.1, 0.9, 0.999, 1e-8});
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  for (int i = 0; i < 5; ++i) adam.Step(p, g);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState adam(2, {0.01, 0.5, 0.9, 1e-12});
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -0.2};
  adam.Step(p, g);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  AdamState adam(1, {0.1, 0.9, 0.999, 1e-8});
  std::vector<double> x{1.0};
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> g{2.0 * x[0]};
    adam.Step(x, g);
  }
  EXPECT_LT(std::abs(x[0]), 0.1);
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState adam(2, {});
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{1.0};
  EXPECT_THROW(adam.Step(p, g), ArgumentError);
}

TEST(FiniteDiff, SumOfSquares) {
  const ScalarFn f = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{2.0, 4.0};
  EXPECT_LT(FiniteDiffCheck(f, g, x, 1e-5), 1e-8);
}

TEST(FiniteDiff, LogSoftmaxJacobianRow) {
  Rng rng(5);
  Vector v(6);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.Normal();
  const int row = 2;
  const ScalarFn f = [&](std::span<const double> x) {
    const Vector in = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    return LogSoftmax(in)[row];
  };
  // d log p_row / d v_j = [row == j] - p_j
  Vector grad = -Softmax(v);
  grad[row] += 1.0;
  EXPECT_LT(FiniteDiffCheck(f, AsSpan(grad), AsSpan(v), 1e-5), 1e-6);
}

TEST(FiniteDiff, DoubledGradientIsFlagged) {
  const ScalarFn f = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1]; };
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{4.0, 8.0};
  EXPECT_NEAR(FiniteDiffCheck(f, g, x, 1e-5), 1.0 / 3.0, 1e-6);
}

TEST(FiniteDiff, NonFiniteThrows) {
  const ScalarFn f = [](std::span<const double> x) { return std::log(x[0]); };
  const std::vector<double> x{0.0};
  const std::vector<double> g{1.0};
  EXPECT_THROW(FiniteDiffCheck(f, g, x, 1e-5), EvaluationError);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.NextU64(), b.NextU64());
  Rng c(42), d(42);
  for (int i = 0; i < 200; ++i) {
    ASSERT_EQ(c.Uniform(), d.Uniform());
    ASSERT_EQ(c.Normal(), d.Normal());
    ASSERT_EQ(c.Gumbel(), d.Gumbel());
  }
}

TEST(Rng, StreamsAreDistinct) {
  Rng a = Rng::Stream(1, 0, 0), b = Rng::Stream(1, 0, 1), c = Rng::Stream(1, 1, 0);
  const uint64_t x = a.NextU64(), y = b.NextU64(), z = c.NextU64();
  EXPECT_NE(x, y);
  EXPECT_NE(x, z);
  EXPECT_NE(y, z);
}

TEST(Rng, UniformIsOpenInterval) {
  Rng rng(9);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.Uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, MomentsOfDraws) {
  Rng rng(11);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.Uniform();
    const double z = rng.Normal();
    sn += z;
    sn2 += z * z;
    sg += rng.Gumbel();
  }
  EXPECT_NEAR(su / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  // Gumbel(0,1) mean is the Euler-Mascheroni constant, variance pi^2/6.
  EXPECT_NEAR(sg / n, std::numbers::egamma, 4.0 * std::sqrt(std::numbers::pi * std::numbers::pi / 6.0 / n));
}

TEST(Rng, CategoricalFrequencies) {
  Rng rng(13);
  const std::vector<double> p{0.1, 0.0, 0.6, 0.3};
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(rng.Categorical(p))];
  EXPECT_EQ(counts[1], 0);
  for (size_t k = 0; k < p.size(); ++k) {
    const double sd = std::sqrt(p[k] * (1 - p[k]) / n);
    EXPECT_NEAR(counts[k] / static_cast<double>(n), p[k], 4.0 * sd + 1e-12);
  }
}

TEST(Rng, UniformIntRange) {
  Rng rng(21);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const int v = rng.UniformInt(7);
    ASSERT_GE(v, 0);
    ASSERT_LT(v, 7);
    ++counts[static_cast<size_t>(v)];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

}  // namespace
}  // namespace clipvq
