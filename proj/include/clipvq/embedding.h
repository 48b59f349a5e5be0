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

#ifndef CLIPVQ_EMBEDDING_H_
#define CLIPVQ_EMBEDDING_H_

#include <cstdint>

#include "clipvq/numerics.h"

namespace clipvq {

// Vector on the unit sphere (norm 1 within 1e-9, checked on construction).
class UnitEmbedding {
 public:
  explicit UnitEmbedding(Vector values);
  // Normalises first; throws on a zero vector.
  static UnitEmbedding Normalize(const Vector& v);

  const Vector& values() const { return values_; }
  int dim() const { return static_cast<int>(values_.size()); }

 private:
  Vector values_;
};

// Synthetic stand-in for a contrastive image/text encoder. Concept
// directions are orthonormal; each text direction sits at exactly
// `gap_angle` from its concept direction, rotated towards a private
// auxiliary direction. When dim >= 2C the auxiliary directions are
// orthogonal to every concept and to each other, so a text embedding has
// zero cosine with every other concept.
struct EmbeddingSpace {
  int dim = 0;
  int concepts = 0;
  double gap_angle = 0.0;
  double jitter = 0.0;
  Matrix concept_dirs;  // C x d
  Matrix text_dirs;     // C x d
};

EmbeddingSpace MakeSpace(int dim, int concepts, double gap_angle, double jitter,
                         uint64_t seed);

// Concept direction rotated by a uniform angle in [0, jitter] towards a
// random orthogonal direction.
UnitEmbedding ImageEmbed(const EmbeddingSpace& sp, int concept_id, Rng& rng);

UnitEmbedding TextEmbed(const EmbeddingSpace& sp, int concept_id);

// normalize(h + alpha * e / |e|) with Gaussian e; the angle to h never
// exceeds asin(alpha). Requires 0 <= alpha < 1.
UnitEmbedding PseudoText(const UnitEmbedding& h, double alpha, Rng& rng);

// Cosine of two unit embeddings; rejects inputs off the sphere by > 1e-6.
double CosineScore(const UnitEmbedding& a, const UnitEmbedding& b);

double AngleBetween(const Vector& a, const Vector& b);

}  // namespace clipvq

#endif  // CLIPVQ_EMBEDDING_H_
