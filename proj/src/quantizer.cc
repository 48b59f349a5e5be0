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

#include "clipvq/quantizer.h"

#include <cmath>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {

void QuantizerConfig::Validate() const {
  if (codebook_size < 2) throw ArgumentError("quantizer: K must be >= 2");
  if (dim_z < 1 || patch < 1 || image_side < 1) {
    throw ArgumentError("quantizer: dims must be positive");
  }
  if (image_side % patch != 0) {
    throw ArgumentError("quantizer: image side " + std::to_string(image_side) +
                        " not divisible by f=" + std::to_string(patch));
  }
}

QuantizerParams QuantizerParams::Zeros(const QuantizerConfig& config) {
  config.Validate();
  QuantizerParams p;
  p.config = config;
  const int K = config.codebook_size, P = config.patch_pixels();
  p.codebook = Matrix::Zero(K, config.dim_z);
  p.enc_w = Matrix::Zero(P, K);
  p.enc_b = Vector::Zero(K);
  p.dec_w = Matrix::Zero(config.dim_z, P);
  p.dec_b = Vector::Zero(P);
  return p;
}

QuantizerParams QuantizerParams::Init(const QuantizerConfig& config, Rng& rng) {
  QuantizerParams p = Zeros(config);
  const int P = config.patch_pixels();
  auto fill = [&](Matrix& m, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.Normal();
  };
  fill(p.codebook, 1.0);
  fill(p.enc_w, 1.0 / std::sqrt(static_cast<double>(P)));
  fill(p.dec_w, 1.0 / std::sqrt(static_cast<double>(config.dim_z)));
  p.dec_b.setConstant(0.5);
  return p;
}

Matrix ExtractPatches(const Vector& image, int side, int patch) {
  if (image.size() != static_cast<Eigen::Index>(side) * side || side % patch != 0) {
    throw ArgumentError("ExtractPatches: image of " + std::to_string(image.size()) +
                        " pixels does not match side " + std::to_string(side) +
                        " / patch " + std::to_string(patch));
  }
  const int grid = side / patch;
  Matrix out(grid * grid, patch * patch);
  for (int pr = 0; pr < grid; ++pr) {
    for (int pc = 0; pc < grid; ++pc) {
      for (int r = 0; r < patch; ++r) {
        for (int c = 0; c < patch; ++c) {
          out(pr * grid + pc, r * patch + c) =
              image[(pr * patch + r) * side + pc * patch + c];
        }
      }
    }
  }
  return out;
}

Vector AssemblePatches(const Matrix& patches, int side, int patch) {
  const int grid = side / patch;
  if (patches.rows() != grid * grid || patches.cols() != patch * patch) {
    throw ArgumentError("AssemblePatches: shape mismatch");
  }
  Vector image(side * side);
  for (int pr = 0; pr < grid; ++pr) {
    for (int pc = 0; pc < grid; ++pc) {
      for (int r = 0; r < patch; ++r) {
        for (int c = 0; c < patch; ++c) {
          image[(pr * patch + r) * side + pc * patch + c] =
              patches(pr * grid + pc, r * patch + c);
        }
      }
    }
  }
  return image;
}

Vector GumbelSoftmaxWithNoise(const Vector& logits, const Vector& gumbel,
                              double tau) {
  if (!(tau > 0.0)) throw ArgumentError("GumbelSoftmax: tau must be > 0");
  if (logits.size() != gumbel.size()) throw ArgumentError("GumbelSoftmax: size mismatch");
  return Softmax((logits + gumbel) / tau);
}

Vector GumbelSoftmax(const Vector& logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ArgumentError("GumbelSoftmax: tau must be > 0");
  Vector g(logits.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = rng.Gumbel();
  return GumbelSoftmaxWithNoise(logits, g, tau);
}

Vector GumbelSoftmaxBackward(const Vector& y, const Vector& dy, double tau) {
  return (y.array() * (dy.array() - y.dot(dy))).matrix() / tau;
}

double AnnealTau(long step, long total_steps, double start, double end) {
  if (total_steps <= 0) return end;
  if (step <= 0) return start;
  if (step >= total_steps) return end;
  return start * std::pow(end / start, static_cast<double>(step) / total_steps);
}

Matrix EncoderLogits(const QuantizerParams& p, const Vector& image) {
  const Matrix patches = ExtractPatches(image, p.config.image_side, p.config.patch);
  Matrix logits = patches * p.enc_w;
  logits.rowwise() += p.enc_b.transpose();
  return logits;
}

namespace {

SoftEncoding EncodeWithNoise(const QuantizerParams& p, const Vector& image,
                             const Matrix& gumbel, double tau) {
  SoftEncoding enc;
  enc.patches = ExtractPatches(image, p.config.image_side, p.config.patch);
  enc.logits = enc.patches * p.enc_w;
  enc.logits.rowwise() += p.enc_b.transpose();
  if (gumbel.rows() != enc.logits.rows() || gumbel.cols() != enc.logits.cols()) {
    throw ArgumentError("EncodeSoft: gumbel noise shape mismatch");
  }
  enc.gumbel = gumbel;
  enc.weights.resize(enc.logits.rows(), enc.logits.cols());
  for (Eigen::Index i = 0; i < enc.logits.rows(); ++i) {
    enc.weights.row(i) = GumbelSoftmaxWithNoise(enc.logits.row(i).transpose(),
                                                gumbel.row(i).transpose(), tau)
                             .transpose();
  }
  enc.latents = enc.weights * p.codebook;
  return enc;
}

}  // namespace

SoftEncoding EncodeSoft(const QuantizerParams& p, const Vector& image, double tau,
                        Rng& rng) {
  if (!(tau > 0.0)) throw ArgumentError("EncodeSoft: tau must be > 0");
  Matrix gumbel(p.config.patches_per_image(), p.config.codebook_size);
  for (Eigen::Index i = 0; i < gumbel.size(); ++i) gumbel.data()[i] = rng.Gumbel();
  return EncodeWithNoise(p, image, gumbel, tau);
}

TokenGrid EncodeHard(const QuantizerParams& p, const Vector& image) {
  const Matrix logits = EncoderLogits(p, image);
  TokenGrid out = TokenGrid::Filled(static_cast<int>(logits.rows()), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < logits.cols(); ++k) {
      if (logits(i, k) > logits(i, best)) best = k;
    }
    out[static_cast<int>(i)] = best;
  }
  return out;
}

Vector DecodeLatents(const QuantizerParams& p, const Matrix& latents) {
  if (latents.rows() != p.config.patches_per_image() || latents.cols() != p.config.dim_z) {
    throw ArgumentError("DecodeLatents: expected " +
                        std::to_string(p.config.patches_per_image()) + "x" +
                        std::to_string(p.config.dim_z) + " latents");
  }
  Matrix patches = latents * p.dec_w;
  patches.rowwise() += p.dec_b.transpose();
  return AssemblePatches(patches, p.config.image_side, p.config.patch);
}

Vector Decode(const QuantizerParams& p, const TokenGrid& tokens) {
  if (tokens.size() != p.config.patches_per_image()) {
    throw ArgumentError("Decode: grid has " + std::to_string(tokens.size()) +
                        " tokens, expected " +
                        std::to_string(p.config.patches_per_image()));
  }
  Matrix latents(tokens.size(), p.config.dim_z);
  for (int i = 0; i < tokens.size(); ++i) {
    const int tok = tokens[i];
    if (tok < 0 || tok >= p.config.codebook_size) {
      throw ArgumentError("Decode: token " + std::to_string(tok) +
                          " is a mask or out of range");
    }
    latents.row(i) = p.codebook.row(tok);
  }
  return DecodeLatents(p, latents);
}

double SoftReconstructionLossWithNoise(const QuantizerParams& p,
                                       const Vector& image, const Matrix& gumbel,
                                       double tau, QuantizerParams* grad) {
  const SoftEncoding enc = EncodeWithNoise(p, image, gumbel, tau);
  Matrix recon = enc.latents * p.dec_w;
  recon.rowwise() += p.dec_b.transpose();
  const Matrix diff = recon - enc.patches;
  const double n = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n;
  if (grad == nullptr) return loss;

  const Matrix d_recon = (2.0 / n) * diff;
  grad->dec_w += enc.latents.transpose() * d_recon;
  grad->dec_b += d_recon.colwise().sum().transpose();
  const Matrix d_latents = d_recon * p.dec_w.transpose();
  grad->codebook += enc.weights.transpose() * d_latents;
  const Matrix d_weights = d_latents * p.codebook.transpose();
  Matrix d_logits(d_weights.rows(), d_weights.cols());
  for (Eigen::Index i = 0; i < d_weights.rows(); ++i) {
    d_logits.row(i) = GumbelSoftmaxBackward(enc.weights.row(i).transpose(),
                                            d_weights.row(i).transpose(), tau)
                          .transpose();
  }
  grad->enc_w += enc.patches.transpose() * d_logits;
  grad->enc_b += d_logits.colwise().sum().transpose();
  return loss;
}

double SoftReconstructionLoss(const QuantizerParams& p, const Vector& image,
                              double tau, Rng& rng, QuantizerParams* grad) {
  Matrix gumbel(p.config.patches_per_image(), p.config.codebook_size);
  for (Eigen::Index i = 0; i < gumbel.size(); ++i) gumbel.data()[i] = rng.Gumbel();
  return SoftReconstructionLossWithNoise(p, image, gumbel, tau, grad);
}

double Mse(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() == 0) throw ArgumentError("Mse: size mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace clipvq
