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

#ifndef CLIPVQ_EVAL_H_
#define CLIPVQ_EVAL_H_

#include <cstdint>
#include <vector>

#include "clipvq/embedding.h"
#include "clipvq/numerics.h"
#include "clipvq/quantizer.h"
#include "clipvq/token_grid.h"

namespace clipvq {

struct FeatureSet {
  int n = 0;
  Vector mean;
  Matrix cov;  // unbiased
  bool rank_deficient = false;  // n < dim + 1

  int dim() const { return static_cast<int>(mean.size()); }
  // Rows of `features` are samples.
  static FeatureSet FromSamples(const Matrix& features);
};

double FrechetDistance(const FeatureSet& a, const FeatureSet& b);

// exp(mean_i KL(p_i || mean_j p_j)); rows must sum to 1 within 1e-6.
double InceptionSurrogate(const Matrix& posteriors);

// Fixed seeded projection of flattened pixels to `dim` features.
class FeatureProjector {
 public:
  FeatureProjector(int pixels, int dim, uint64_t seed);
  Matrix Project(const std::vector<Vector>& images) const;
  int dim() const { return static_cast<int>(weights_.cols()); }

 private:
  Matrix weights_;  // pixels x dim
};

// Maps images into the embedding space through a soft nearest-pattern
// assignment, softmax(-MSE / temperature), combined with concept_dirs.
class ImageScorer {
 public:
  ImageScorer(Matrix patterns, EmbeddingSpace space, double temperature = 0.01);

  Vector Posterior(const Vector& image) const;  // over concepts
  int Classify(const Vector& image) const;      // min MSE, ties to lower index
  UnitEmbedding Embed(const Vector& image) const;
  double ClipScore(const Vector& image, const UnitEmbedding& text) const;

  const EmbeddingSpace& space() const { return space_; }
  const Matrix& patterns() const { return patterns_; }

 private:
  Matrix patterns_;  // C x pixels
  EmbeddingSpace space_;
  double temperature_;
};

struct BestOf {
  size_t index = 0;
  TokenGrid grid;
  double score = 0.0;
  std::vector<double> scores;
};

// Decodes every candidate and keeps the highest clip score; ties go to the
// earliest candidate.
BestOf BestOfN(const std::vector<TokenGrid>& candidates, const UnitEmbedding& text,
               const QuantizerParams& quantizer, const ImageScorer& scorer);

double ConceptAccuracy(const std::vector<Vector>& images, const std::vector<int>& labels,
                       const ImageScorer& scorer);

}  // namespace clipvq

#endif  // CLIPVQ_EVAL_H_
