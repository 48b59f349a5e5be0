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

#include "clipvq/embedding.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {
namespace {

Vector GaussianVector(int dim, Rng& rng) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.Normal();
  return v;
}

// Gaussian draw with the span of `basis` rows projected out, normalised.
Vector OrthogonalDraw(const Matrix& basis, int rows_used, Rng& rng) {
  const int dim = static_cast<int>(basis.cols());
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vector v = GaussianVector(dim, rng);
    // Two passes of Gram-Schmidt for stability.
    for (int pass = 0; pass < 2; ++pass) {
      for (int r = 0; r < rows_used; ++r) {
        v -= basis.row(r).dot(v) * basis.row(r).transpose();
      }
    }
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
  throw ArgumentError("OrthogonalDraw: could not find an orthogonal direction");
}

}  // namespace

UnitEmbedding::UnitEmbedding(Vector values) : values_(std::move(values)) {
  if (std::abs(values_.norm() - 1.0) > 1e-9) {
    throw ArgumentError("UnitEmbedding: norm " + std::to_string(values_.norm()));
  }
}

UnitEmbedding UnitEmbedding::Normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw ArgumentError("UnitEmbedding::Normalize: zero vector");
  return UnitEmbedding(v / n);
}

double AngleBetween(const Vector& a, const Vector& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

EmbeddingSpace MakeSpace(int dim, int concepts, double gap_angle, double jitter,
                         uint64_t seed) {
  if (concepts < 1) throw ArgumentError("MakeSpace: need at least one concept");
  if (dim < concepts) {
    throw ArgumentError("MakeSpace: dim " + std::to_string(dim) +
                        " < concept count " + std::to_string(concepts));
  }
  if (!(gap_angle >= 0.0 && gap_angle < std::numbers::pi / 2)) {
    throw ArgumentError("MakeSpace: gap_angle must lie in [0, pi/2)");
  }
  if (jitter < 0.0) throw ArgumentError("MakeSpace: jitter must be >= 0");
  Rng rng(seed);
  EmbeddingSpace sp;
  sp.dim = dim;
  sp.concepts = concepts;
  sp.gap_angle = gap_angle;
  sp.jitter = jitter;
  // Orthonormal concept rows first, then auxiliary rows orthogonal to all
  // previous rows while the dimension allows it.
  Matrix basis(std::min(dim, 2 * concepts), dim);
  int used = 0;
  for (int c = 0; c < concepts; ++c) {
    const Vector dir = OrthogonalDraw(basis, used, rng);
    basis.row(used++) = dir.transpose();
  }
  sp.concept_dirs = basis.topRows(concepts);
  sp.text_dirs.resize(concepts, dim);
  const double cos_g = std::cos(gap_angle), sin_g = std::sin(gap_angle);
  for (int c = 0; c < concepts; ++c) {
    Vector aux;
    if (used < basis.rows()) {
      aux = OrthogonalDraw(basis, used, rng);
      basis.row(used) = aux.transpose();
      ++used;
    } else {
      Matrix own = sp.concept_dirs.row(c);
      aux = OrthogonalDraw(own, 1, rng);
    }
    if (gap_angle == 0.0) {
      sp.text_dirs.row(c) = sp.concept_dirs.row(c);
    } else {
      Vector text = cos_g * sp.concept_dirs.row(c).transpose() + sin_g * aux;
      sp.text_dirs.row(c) = (text / text.norm()).transpose();
    }
  }
  return sp;
}

UnitEmbedding ImageEmbed(const EmbeddingSpace& sp, int concept_id, Rng& rng) {
  if (concept_id < 0 || concept_id >= sp.concepts) {
    throw ArgumentError("ImageEmbed: concept " + std::to_string(concept_id) +
                        " out of range");
  }
  const Vector base = sp.concept_dirs.row(concept_id).transpose();
  if (sp.jitter == 0.0) return UnitEmbedding(base);
  const Matrix basis = base.transpose();
  const Vector dir = OrthogonalDraw(basis, 1, rng);
  const double angle = rng.Uniform() * sp.jitter;
  return UnitEmbedding::Normalize(std::cos(angle) * base + std::sin(angle) * dir);
}

UnitEmbedding TextEmbed(const EmbeddingSpace& sp, int concept_id) {
  if (concept_id < 0 || concept_id >= sp.concepts) {
    throw ArgumentError("TextEmbed: concept " + std::to_string(concept_id) +
                        " out of range");
  }
  return UnitEmbedding::Normalize(sp.text_dirs.row(concept_id).transpose());
}

UnitEmbedding PseudoText(const UnitEmbedding& h, double alpha, Rng& rng) {
  if (!(alpha >= 0.0)) throw ArgumentError("PseudoText: alpha must be >= 0");
  if (alpha >= 1.0) {
    throw ArgumentError("PseudoText: alpha = " + std::to_string(alpha) +
                        " >= 1 leaves the angle bound undefined");
  }
  if (alpha == 0.0) return h;
  Vector e = GaussianVector(h.dim(), rng);
  while (e.norm() == 0.0) e = GaussianVector(h.dim(), rng);
  return UnitEmbedding::Normalize(h.values() + alpha * e / e.norm());
}

double CosineScore(const UnitEmbedding& a, const UnitEmbedding& b) {
  if (a.dim() != b.dim()) throw ArgumentError("CosineScore: dimension mismatch");
  const double na = a.values().norm(), nb = b.values().norm();
  if (std::abs(na - 1.0) > 1e-6 || std::abs(nb - 1.0) > 1e-6) {
    throw ArgumentError("CosineScore: inputs must be unit norm");
  }
  return std::clamp(a.values().dot(b.values()), -1.0, 1.0);
}

}  // namespace clipvq
