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

#ifndef CLIPVQ_QUANTIZER_H_
#define CLIPVQ_QUANTIZER_H_

#include <string>

#include "clipvq/numerics.h"
#include "clipvq/token_grid.h"

namespace clipvq {

struct QuantizerConfig {
  int codebook_size = 16;  // K
  int dim_z = 8;
  int patch = 4;           // compression rate f
  int image_side = 16;

  int patches_per_image() const { return (image_side / patch) * (image_side / patch); }
  int patch_pixels() const { return patch * patch; }
  void Validate() const;
};

// Gumbel-softmax tokenizer: each non-overlapping f x f patch maps affinely to
// K logits; the latent is the weighted codebook row mix, decoded affinely
// back to the patch.
struct QuantizerParams {
  QuantizerConfig config;
  Matrix codebook;  // K x dim_z
  Matrix enc_w;     // f^2 x K
  Vector enc_b;     // K
  Matrix dec_w;     // dim_z x f^2
  Vector dec_b;     // f^2

  static QuantizerParams Init(const QuantizerConfig& config, Rng& rng);
  static QuantizerParams Zeros(const QuantizerConfig& config);

  template <class F>
  void Visit(F&& f) {
    VisitImpl(*this, f);
  }
  template <class F>
  void Visit(F&& f) const {
    VisitImpl(*this, f);
  }

 private:
  template <class Self, class F>
  static void VisitImpl(Self& self, F& f) {
    f("codebook", self.codebook);
    f("enc_w", self.enc_w);
    f("enc_b", self.enc_b);
    f("dec_w", self.dec_w);
    f("dec_b", self.dec_b);
  }
};

// Image (side*side, row-major) <-> patches (one row of f*f pixels each,
// patches in row-major order over the patch grid).
Matrix ExtractPatches(const Vector& image, int side, int patch);
Vector AssemblePatches(const Matrix& patches, int side, int patch);

// softmax((logits + g) / tau) with fresh Gumbel(0,1) draws g.
Vector GumbelSoftmax(const Vector& logits, double tau, Rng& rng);
// Same with the Gumbel draws supplied.
Vector GumbelSoftmaxWithNoise(const Vector& logits, const Vector& gumbel, double tau);
// Vector-Jacobian product of the above at output y: dL/dlogits.
Vector GumbelSoftmaxBackward(const Vector& y, const Vector& dy, double tau);

// Geometric interpolation start * (end / start)^(step / total).
double AnnealTau(long step, long total_steps, double start = 0.9, double end = 0.01);

struct SoftEncoding {
  Matrix patches;  // n x f^2
  Matrix logits;   // n x K
  Matrix gumbel;   // n x K
  Matrix weights;  // n x K
  Matrix latents;  // n x dim_z
};

Matrix EncoderLogits(const QuantizerParams& p, const Vector& image);
SoftEncoding EncodeSoft(const QuantizerParams& p, const Vector& image, double tau,
                        Rng& rng);
// Per-patch argmax of the noise-free logits, ties to the lower index.
TokenGrid EncodeHard(const QuantizerParams& p, const Vector& image);

Vector DecodeLatents(const QuantizerParams& p, const Matrix& latents);
// Throws ArgumentError on mask or out-of-range tokens.
Vector Decode(const QuantizerParams& p, const TokenGrid& tokens);

// Mean squared reconstruction error through the soft path. When `grad` is
// non-null the gradient is accumulated into it.
double SoftReconstructionLoss(const QuantizerParams& p, const Vector& image,
                              double tau, Rng& rng, QuantizerParams* grad);
// Same with the Gumbel noise given (n x K), for gradient checking.
double SoftReconstructionLossWithNoise(const QuantizerParams& p,
                                       const Vector& image, const Matrix& gumbel,
                                       double tau, QuantizerParams* grad);

double Mse(const Vector& a, const Vector& b);

}  // namespace clipvq

#endif  // CLIPVQ_QUANTIZER_H_
