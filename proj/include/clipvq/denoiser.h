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

#ifndef CLIPVQ_DENOISER_H_
#define CLIPVQ_DENOISER_H_

#include <string>
#include <vector>

#include "clipvq/numerics.h"
#include "clipvq/token_grid.h"

namespace clipvq {

struct DenoiserConfig {
  int num_tokens = 16;  // K; the input vocabulary adds the mask
  int seq_len = 16;     // |S|
  int d_model = 64;
  int heads = 4;
  int blocks = 2;
  int cond_dim = 32;     // width of the conditioning embedding
  int cond_hidden = 64;  // hidden width of the modulation MLP
  int ff_mult = 4;

  int head_dim() const { return d_model / heads; }
  void Validate() const;
};

struct BlockParams {
  // Modulation MLP: cond -> SiLU -> [sigma1 | mu1 | sigma2 | mu2].
  Matrix mod_w1;  // cond_dim x cond_hidden
  Vector mod_b1;
  Matrix mod_w2;  // cond_hidden x 4*d_model
  Vector mod_b2;
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Vector bo;
  Matrix ff_w1;  // d_model x ff
  Vector ff_b1;
  Matrix ff_w2;  // ff x d_model
  Vector ff_b2;
};

struct DenoiserParams {
  DenoiserConfig config;
  Matrix tok_emb;  // (K+1) x d_model
  Matrix pos_emb;  // |S| x d_model
  Matrix time_w;   // d_model x cond_dim (from sinusoidal features)
  Vector time_b;   // cond_dim
  Vector null_cond;  // learned stand-in for a dropped condition
  std::vector<BlockParams> blocks;
  Matrix head_w;  // d_model x K
  Vector head_b;

  static DenoiserParams Init(const DenoiserConfig& config, Rng& rng);
  static DenoiserParams Zeros(const DenoiserConfig& config);

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
    f("tok_emb", self.tok_emb);
    f("pos_emb", self.pos_emb);
    f("time_w", self.time_w);
    f("time_b", self.time_b);
    f("null_cond", self.null_cond);
    for (size_t i = 0; i < self.blocks.size(); ++i) {
      auto& b = self.blocks[i];
      const std::string pre = "block" + std::to_string(i) + ".";
      f(pre + "mod_w1", b.mod_w1);
      f(pre + "mod_b1", b.mod_b1);
      f(pre + "mod_w2", b.mod_w2);
      f(pre + "mod_b2", b.mod_b2);
      f(pre + "wq", b.wq);
      f(pre + "wk", b.wk);
      f(pre + "wv", b.wv);
      f(pre + "wo", b.wo);
      f(pre + "bo", b.bo);
      f(pre + "ff_w1", b.ff_w1);
      f(pre + "ff_b1", b.ff_b1);
      f(pre + "ff_w2", b.ff_w2);
      f(pre + "ff_b2", b.ff_b2);
    }
    f("head_w", self.head_w);
    f("head_b", self.head_b);
  }
};

// Either an embedding of width cond_dim or the learned null condition.
class Condition {
 public:
  static Condition Embedding(Vector v) { return Condition(std::move(v), false); }
  static Condition Null() { return Condition(Vector(), true); }

  bool is_null() const { return is_null_; }
  const Vector& values() const { return values_; }

 private:
  Condition(Vector v, bool is_null) : values_(std::move(v)), is_null_(is_null) {}
  Vector values_;
  bool is_null_;
};

struct AdalnModulation {
  Vector sigma;
  Vector mu;
};

// sigma * LN(x) + mu with LN over the feature axis (epsilon 1e-5).
Vector Adaln(const Vector& x, const AdalnModulation& mod);

// Raw sinusoidal features: [sin(t w_i), cos(t w_i)] with
// w_i = 10000^(-i/half); an odd width gets a trailing zero.
Vector TimestepFeatures(int t, int width);

// Activations kept by Forward for Backward.
struct ForwardCache {
  struct Block {
    Vector mod_pre, mod_hidden, mod;  // modulation MLP
    Matrix x_in, norm1, a, q, k, v, attn_out, x_mid, norm2, b, ff_pre, ff_act;
    Vector inv_std1, inv_std2;
    std::vector<Matrix> probs;  // per head, |S| x |S|
  };
  bool valid = false;
  TokenGrid xt;
  bool null_condition = false;
  Vector time_features;
  Vector cond_total;  // condition + timestep projection
  std::vector<Block> blocks;
  Matrix x_final;
};

// Clean-token logits, |S| x K.
Matrix Forward(const DenoiserParams& p, const TokenGrid& xt, int t,
               const Condition& cond, ForwardCache* cache = nullptr);

// Accumulates dLoss/dparams into `grads` (same shape as p). When the
// condition was an embedding and `d_cond` is non-null, writes dLoss/dcond.
void Backward(const DenoiserParams& p, const ForwardCache& cache,
              const Matrix& d_logits, DenoiserParams& grads,
              Vector* d_cond = nullptr);

}  // namespace clipvq

#endif  // CLIPVQ_DENOISER_H_
