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

#include "clipvq/eval.h"

#include <cmath>

#include "clipvq/config.h"
#include "clipvq/errors.h"

namespace clipvq {

FeatureSet FeatureSet::FromSamples(const Matrix& features) {
  if (features.rows() < 1 || features.cols() < 1) {
    throw ArgumentError("FeatureSet: need at least one sample and one feature");
  }
  FeatureSet fs;
  fs.n = static_cast<int>(features.rows());
  fs.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - fs.mean.transpose();
  if (fs.n > 1) {
    fs.cov = centered.transpose() * centered / static_cast<double>(fs.n - 1);
  } else {
    fs.cov = Matrix::Zero(features.cols(), features.cols());
  }
  fs.cov = 0.5 * (fs.cov + fs.cov.transpose());
  fs.rank_deficient = fs.n < fs.dim() + 1;
  return fs;
}

double FrechetDistance(const FeatureSet& a, const FeatureSet& b) {
  if (a.dim() != b.dim()) {
    throw ArgumentError("FrechetDistance: dims differ (" + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()) + ")");
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const Matrix root_a = PsdSqrt(a.cov);
  Matrix sandwich = root_a * b.cov * root_a;
  sandwich = 0.5 * (sandwich + sandwich.transpose());
  const double trace =
      a.cov.trace() + b.cov.trace() - 2.0 * PsdSqrt(sandwich).trace();
  return std::max(0.0, mean_term + std::max(0.0, trace));
}

double InceptionSurrogate(const Matrix& posteriors) {
  if (posteriors.rows() < 1 || posteriors.cols() < 1) {
    throw ArgumentError("InceptionSurrogate: empty posterior matrix");
  }
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i) {
    const double sum = posteriors.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-6 || (posteriors.row(i).array() < 0.0).any()) {
      throw ArgumentError("InceptionSurrogate: row " + std::to_string(i) +
                          " is not a distribution (sum " + FormatDouble(sum) + ")");
    }
  }
  const Vector marginal = posteriors.colwise().mean().transpose();
  double kl_sum = 0.0;
  for (Eigen::Index i = 0; i < posteriors.rows(); ++i) {
    for (Eigen::Index c = 0; c < posteriors.cols(); ++c) {
      const double p = posteriors(i, c);
      if (p > 0.0) kl_sum += p * (std::log(p) - std::log(marginal[c]));
    }
  }
  return std::exp(kl_sum / static_cast<double>(posteriors.rows()));
}

FeatureProjector::FeatureProjector(int pixels, int dim, uint64_t seed) {
  if (pixels < 1 || dim < 1) throw ArgumentError("FeatureProjector: bad shape");
  Rng rng(seed);
  weights_.resize(pixels, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(pixels));
  for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights_.cols(); ++c) weights_(r, c) = scale * rng.Normal();
  }
}

Matrix FeatureProjector::Project(const std::vector<Vector>& images) const {
  Matrix out(static_cast<Eigen::Index>(images.size()), weights_.cols());
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != weights_.rows()) throw ArgumentError("FeatureProjector: pixel count mismatch");
    out.row(static_cast<Eigen::Index>(i)) = images[i].transpose() * weights_;
  }
  return out;
}

ImageScorer::ImageScorer(Matrix patterns, EmbeddingSpace space, double temperature)
    : patterns_(std::move(patterns)), space_(std::move(space)), temperature_(temperature) {
  if (patterns_.rows() != space_.concepts) {
    throw ArgumentError("ImageScorer: pattern count differs from the space's concept count");
  }
  if (!(temperature_ > 0.0)) throw ArgumentError("ImageScorer: temperature must be positive");
}

namespace {

Vector PatternMse(const Matrix& patterns, const Vector& image) {
  if (image.size() != patterns.cols()) throw ArgumentError("image size differs from pattern size");
  return (patterns.rowwise() - image.transpose()).rowwise().squaredNorm() /
         static_cast<double>(image.size());
}

}  // namespace

Vector ImageScorer::Posterior(const Vector& image) const {
  return Softmax(-PatternMse(patterns_, image) / temperature_);
}

int ImageScorer::Classify(const Vector& image) const {
  const Vector mse = PatternMse(patterns_, image);
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < mse.size(); ++c) {
    if (mse[c] < mse[best]) best = c;
  }
  return static_cast<int>(best);
}

UnitEmbedding ImageScorer::Embed(const Vector& image) const {
  return UnitEmbedding::Normalize(space_.concept_dirs.transpose() * Posterior(image));
}

double ImageScorer::ClipScore(const Vector& image, const UnitEmbedding& text) const {
  return CosineScore(Embed(image), text);
}

BestOf BestOfN(const std::vector<TokenGrid>& candidates, const UnitEmbedding& text,
               const QuantizerParams& quantizer, const ImageScorer& scorer) {
  if (candidates.empty()) throw ArgumentError("BestOfN: no candidates");
  BestOf best;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double score = scorer.ClipScore(Decode(quantizer, candidates[i]), text);
    best.scores.push_back(score);
    if (i == 0 || score > best.score) {
      best.index = i;
      best.score = score;
    }
  }
  best.grid = candidates[best.index];
  return best;
}

double ConceptAccuracy(const std::vector<Vector>& images, const std::vector<int>& labels,
                       const ImageScorer& scorer) {
  if (images.size() != labels.size()) throw ArgumentError("ConceptAccuracy: length mismatch");
  if (images.empty()) throw ArgumentError("ConceptAccuracy: no samples");
  size_t hits = 0;
  for (size_t i = 0; i < images.size(); ++i) hits += scorer.Classify(images[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace clipvq
