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

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "clipvq/errors.h"
#include "clipvq/eval.h"
#include "clipvq/pipeline.h"

namespace clipvq {
namespace {

Matrix GaussianSamples(int n, const Vector& mean, const Matrix& chol, Rng& rng) {
  Matrix out(n, mean.size());
  for (int i = 0; i < n; ++i) {
    Vector z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.Normal();
    out.row(i) = (mean + chol * z).transpose();
  }
  return out;
}

// ||mu_a - mu_b||^2 + tr(A) + tr(B) - 2 sum sqrt(eig(A B)), using the
// non-symmetric product rather than the sandwich form.
double FrechetViaProductEigenvalues(const FeatureSet& a, const FeatureSet& b) {
  const Eigen::VectorXcd eig = Eigen::EigenSolver<Matrix>(a.cov * b.cov).eigenvalues();
  double root_trace = 0.0;
  for (Eigen::Index i = 0; i < eig.size(); ++i) root_trace += std::sqrt(eig[i]).real();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * root_trace;
}

TEST(FeatureSet, UnbiasedMoments) {
  Matrix x(3, 2);
  x << 1, 2, 3, 6, 5, 4;
  const FeatureSet fs = FeatureSet::FromSamples(x);
  EXPECT_EQ(fs.n, 3);
  EXPECT_NEAR(fs.mean[0], 3.0, 1e-15);
  EXPECT_NEAR(fs.mean[1], 4.0, 1e-15);
  EXPECT_NEAR(fs.cov(0, 0), 4.0, 1e-14);
  EXPECT_NEAR(fs.cov(1, 1), 4.0, 1e-14);
  EXPECT_NEAR(fs.cov(0, 1), 2.0, 1e-14);
  EXPECT_TRUE(fs.rank_deficient == false);
  EXPECT_TRUE(FeatureSet::FromSamples(Matrix::Zero(2, 4)).rank_deficient);
}

TEST(Frechet, IdenticalSetsGiveZero) {
  Rng rng(1);
  Matrix chol = Matrix::Identity(6, 6);
  chol(3, 1) = 0.5;
  const FeatureSet fs = FeatureSet::FromSamples(GaussianSamples(200, Vector::Zero(6), chol, rng));
  EXPECT_NEAR(FrechetDistance(fs, fs), 0.0, 1e-8);
}

TEST(Frechet, OneDimensionalPopulations) {
  FeatureSet a, b;
  a.n = b.n = 1000;
  a.mean = Vector::Zero(1);
  b.mean = Vector::Ones(1);
  a.cov = b.cov = Matrix::Identity(1, 1);
  EXPECT_NEAR(FrechetDistance(a, b), 1.0, 1e-12);
  b.cov(0, 0) = 4.0;  // sigma 2: (1)^2 + (2 - 1)^2
  EXPECT_NEAR(FrechetDistance(a, b), 2.0, 1e-12);
}

TEST(Frechet, MatchesIndependentFormulaAndMonteCarlo) {
  Rng rng(2);
  Matrix la(4, 4), lb(4, 4);
  for (Eigen::Index i = 0; i < 16; ++i) {
    la.data()[i] = 0.6 * rng.Normal();
    lb.data()[i] = 0.6 * rng.Normal();
  }
  Vector ma(4), mb(4);
  for (int i = 0; i < 4; ++i) {
    ma[i] = rng.Normal();
    mb[i] = rng.Normal();
  }
  const FeatureSet a = FeatureSet::FromSamples(GaussianSamples(500, ma, la, rng));
  const FeatureSet b = FeatureSet::FromSamples(GaussianSamples(500, mb, lb, rng));
  EXPECT_NEAR(FrechetDistance(a, b), FrechetViaProductEigenvalues(a, b), 1e-6);

  // Large samples approach the population distance.
  FeatureSet pa, pb;
  pa.n = pb.n = 1;
  pa.mean = ma;
  pb.mean = mb;
  pa.cov = la * la.transpose();
  pb.cov = lb * lb.transpose();
  const double population = FrechetDistance(pa, pb);
  EXPECT_NEAR(population, FrechetViaProductEigenvalues(pa, pb), 1e-6);
  const FeatureSet big_a = FeatureSet::FromSamples(GaussianSamples(200000, ma, la, rng));
  const FeatureSet big_b = FeatureSet::FromSamples(GaussianSamples(200000, mb, lb, rng));
  EXPECT_NEAR(FrechetDistance(big_a, big_b), population, 0.02 * population + 0.01);
}

TEST(Frechet, SymmetricAndValidated) {
  Rng rng(3);
  const FeatureSet a = FeatureSet::FromSamples(GaussianSamples(50, Vector::Zero(5), Matrix::Identity(5, 5), rng));
  const FeatureSet b = FeatureSet::FromSamples(GaussianSamples(50, Vector::Ones(5), 2.0 * Matrix::Identity(5, 5), rng));
  EXPECT_NEAR(FrechetDistance(a, b), FrechetDistance(b, a), 1e-9);
  const FeatureSet c = FeatureSet::FromSamples(Matrix::Zero(5, 3));
  EXPECT_THROW(FrechetDistance(a, c), ArgumentError);
}

TEST(InceptionSurrogate, Examples) {
  Matrix same(5, 3);
  for (int i = 0; i < 5; ++i) same.row(i) << 0.2, 0.5, 0.3;
  EXPECT_NEAR(InceptionSurrogate(same), 1.0, 1e-12);

  const Matrix onehot = Matrix::Identity(4, 4);
  EXPECT_NEAR(InceptionSurrogate(onehot), 4.0, 1e-12);

  Matrix mixed(3, 2);
  mixed << 1, 0, 1, 0, 0, 1;
  // KL terms: ln(3/2) twice and ln 3 once, so the score is 6.75^(1/3).
  EXPECT_NEAR(InceptionSurrogate(mixed), std::cbrt(6.75), 1e-12);
  EXPECT_NEAR(InceptionSurrogate(mixed), 1.8899, 1e-4);
}

TEST(InceptionSurrogate, RejectsNonDistributions) {
  Matrix bad(2, 2);
  bad << 0.5, 0.5, 0.5, 0.6;
  EXPECT_THROW(InceptionSurrogate(bad), ArgumentError);
}

class EvalFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Config cfg;
    cfg.Set("data.images_per_concept", "16");
    data_ = GenData(cfg);
    QuantizerConfig qc;
    Rng rng(4);
    q_ = QuantizerParams::Init(qc, rng);
  }
  Dataset data_;
  QuantizerParams q_;
};

TEST_F(EvalFixture, PatternsClassifyAndEmbedToTheirConcept) {
  const ImageScorer scorer(data_.patterns, data_.space);
  std::vector<Vector> images;
  std::vector<int> labels;
  for (int c = 0; c < data_.concepts(); ++c) {
    images.push_back(data_.patterns.row(c).transpose());
    labels.push_back(c);
    EXPECT_NEAR(scorer.ClipScore(images.back(), TextEmbed(data_.space, c)), 0.4, 1e-6);
  }
  EXPECT_DOUBLE_EQ(ConceptAccuracy(images, labels, scorer), 1.0);
  EXPECT_DOUBLE_EQ(ConceptAccuracy(data_.images, data_.labels, scorer), 1.0);
  EXPECT_THROW(ConceptAccuracy(images, {0}, scorer), ArgumentError);
}

TEST_F(EvalFixture, ShuffledLabelsAndNoiseSitAtChance) {
  const ImageScorer scorer(data_.patterns, data_.space);
  Rng rng(5);
  double shuffled = 0.0, noise = 0.0;
  const int trials = 50;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int> labels = data_.labels;
    for (size_t i = labels.size() - 1; i > 0; --i) {
      std::swap(labels[i], labels[static_cast<size_t>(rng.UniformInt(static_cast<int>(i) + 1))]);
    }
    shuffled += ConceptAccuracy(data_.images, labels, scorer);
    std::vector<Vector> pure_noise;
    std::vector<int> noise_labels;
    for (int i = 0; i < 64; ++i) {
      Vector img(data_.patterns.cols());
      for (Eigen::Index k = 0; k < img.size(); ++k) img[k] = rng.Uniform();
      pure_noise.push_back(img);
      noise_labels.push_back(i % 8);
    }
    noise += ConceptAccuracy(pure_noise, noise_labels, scorer);
  }
  EXPECT_NEAR(shuffled / trials, 1.0 / 8, 0.02);
  EXPECT_NEAR(noise / trials, 1.0 / 8, 0.03);
}

TEST_F(EvalFixture, BestOfSingleAndDuplicates) {
  const ImageScorer scorer(data_.patterns, data_.space);
  const UnitEmbedding text = TextEmbed(data_.space, 2);
  const TokenGrid g = TokenGrid::Filled(16, 3);
  const BestOf single = BestOfN({g}, text, q_, scorer);
  EXPECT_EQ(single.grid, g);
  EXPECT_EQ(single.index, 0u);
  const BestOf dup = BestOfN({g, g, g}, text, q_, scorer);
  EXPECT_EQ(dup.index, 0u);
  EXPECT_THROW(BestOfN({}, text, q_, scorer), ArgumentError);
}

TEST_F(EvalFixture, BestOfFindsPlantedCandidate) {
  // A quantizer trained briefly on the toy set; one candidate is the hard
  // encoding of the true concept's pattern, the rest are random grids.
  Config cfg;
  cfg.Set("data.images_per_concept", "16");
  QuantizerTrainConfig tc = QuantizerTrainConfigFrom(cfg);
  tc.steps = 1500;
  const QuantizerParams q = TrainQuantizer(QuantizerConfigFrom(cfg), tc, data_.images).params;
  const ImageScorer scorer(data_.patterns, data_.space);
  int hits = 0;
  const int trials = 100;
  for (int seed = 0; seed < trials; ++seed) {
    Rng rng(static_cast<uint64_t>(seed));
    const int c = seed % 8;
    std::vector<TokenGrid> candidates;
    for (int i = 0; i < 16; ++i) {
      TokenGrid g = TokenGrid::Filled(16, 0);
      for (int k = 0; k < 16; ++k) g[k] = rng.UniformInt(16);
      candidates.push_back(g);
    }
    const size_t planted = static_cast<size_t>(rng.UniformInt(16));
    candidates[planted] = EncodeHard(q, data_.patterns.row(c).transpose());
    const BestOf best = BestOfN(candidates, TextEmbed(data_.space, c), q, scorer);
    hits += best.index == planted;
    EXPECT_EQ(best.score, *std::max_element(best.scores.begin(), best.scores.end()));
  }
  EXPECT_GE(hits, 95);
}

TEST_F(EvalFixture, FeatureProjectorIsFixed) {
  const FeatureProjector a(256, 16, 9), b(256, 16, 9);
  const std::vector<Vector> imgs(data_.images.begin(), data_.images.begin() + 10);
  EXPECT_EQ(a.Project(imgs), b.Project(imgs));
  EXPECT_EQ(a.Project(imgs).cols(), 16);
}

}  // namespace
}  // namespace clipvq
