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

#include "clipvq/denoiser.h"

#include <cmath>
#include <numbers>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {
namespace {

constexpr double kLnEps = 1e-5;

void FillNormal(Matrix& m, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.Normal();
}

double Silu(double x) { return x / (1.0 + std::exp(-x)); }
double SiluGrad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Row-wise layer norm; returns normalised rows and fills 1/std per row.
Matrix LayerNormRows(const Matrix& x, Vector& inv_std) {
  const Eigen::Index n = x.cols();
  Matrix out(x.rows(), n);
  inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLnEps);
    out.row(r) = (x.row(r).array() - mean) * inv_std[r];
  }
  return out;
}

// Backward of LayerNormRows given dL/d(normalised).
Matrix LayerNormRowsBackward(const Matrix& norm, const Vector& inv_std,
                             const Matrix& d_norm) {
  const double n = static_cast<double>(norm.cols());
  Matrix dx(norm.rows(), norm.cols());
  for (Eigen::Index r = 0; r < norm.rows(); ++r) {
    const double mean_d = d_norm.row(r).sum() / n;
    const double mean_dn = d_norm.row(r).dot(norm.row(r)) / n;
    dx.row(r) = inv_std[r] * (d_norm.row(r).array() - mean_d - norm.row(r).array() * mean_dn);
  }
  return dx;
}

void CheckGrid(const DenoiserConfig& c, const TokenGrid& xt) {
  if (xt.size() != c.seq_len) {
    throw ArgumentError("denoiser: grid length " + std::to_string(xt.size()) +
                        ", expected " + std::to_string(c.seq_len));
  }
  for (int v : xt.tokens) {
    if (v < 0 || v > c.num_tokens) {
      throw ArgumentError("denoiser: token " + std::to_string(v) + " out of range");
    }
  }
}

}  // namespace

void DenoiserConfig::Validate() const {
  if (num_tokens < 2 || seq_len < 1 || d_model < 2 || heads < 1 || blocks < 0 ||
      cond_dim < 1 || cond_hidden < 1 || ff_mult < 1) {
    throw ArgumentError("denoiser: invalid configuration");
  }
  if (d_model % heads != 0) {
    throw ArgumentError("denoiser: d_model " + std::to_string(d_model) +
                        " not divisible by heads " + std::to_string(heads));
  }
}

DenoiserParams DenoiserParams::Zeros(const DenoiserConfig& c) {
  c.Validate();
  DenoiserParams p;
  p.config = c;
  const int D = c.d_model, F = c.d_model * c.ff_mult;
  p.tok_emb = Matrix::Zero(c.num_tokens + 1, D);
  p.pos_emb = Matrix::Zero(c.seq_len, D);
  p.time_w = Matrix::Zero(D, c.cond_dim);
  p.time_b = Vector::Zero(c.cond_dim);
  p.null_cond = Vector::Zero(c.cond_dim);
  p.blocks.resize(static_cast<size_t>(c.blocks));
  for (auto& b : p.blocks) {
    b.mod_w1 = Matrix::Zero(c.cond_dim, c.cond_hidden);
    b.mod_b1 = Vector::Zero(c.cond_hidden);
    b.mod_w2 = Matrix::Zero(c.cond_hidden, 4 * D);
    b.mod_b2 = Vector::Zero(4 * D);
    b.wq = b.wk = b.wv = b.wo = Matrix::Zero(D, D);
    b.bo = Vector::Zero(D);
    b.ff_w1 = Matrix::Zero(D, F);
    b.ff_b1 = Vector::Zero(F);
    b.ff_w2 = Matrix::Zero(F, D);
    b.ff_b2 = Vector::Zero(D);
  }
  p.head_w = Matrix::Zero(D, c.num_tokens);
  p.head_b = Vector::Zero(c.num_tokens);
  return p;
}

DenoiserParams DenoiserParams::Init(const DenoiserConfig& c, Rng& rng) {
  DenoiserParams p = Zeros(c);
  const int D = c.d_model, F = c.d_model * c.ff_mult;
  auto inv_sqrt = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  FillNormal(p.tok_emb, 1.0, rng);
  FillNormal(p.pos_emb, 1.0, rng);
  FillNormal(p.time_w, inv_sqrt(D), rng);
  for (auto& b : p.blocks) {
    FillNormal(b.mod_w1, inv_sqrt(c.cond_dim), rng);
    FillNormal(b.mod_w2, 0.02, rng);
    // sigma entries start at 1 so every AdaLN begins as a plain layer norm.
    b.mod_b2.segment(0, D).setOnes();
    b.mod_b2.segment(2 * D, D).setOnes();
    FillNormal(b.wq, inv_sqrt(D), rng);
    FillNormal(b.wk, inv_sqrt(D), rng);
    FillNormal(b.wv, inv_sqrt(D), rng);
    FillNormal(b.wo, inv_sqrt(D), rng);
    FillNormal(b.ff_w1, inv_sqrt(D), rng);
    FillNormal(b.ff_w2, inv_sqrt(F), rng);
  }
  FillNormal(p.head_w, inv_sqrt(D), rng);
  return p;
}

Vector Adaln(const Vector& x, const AdalnModulation& mod) {
  if (x.size() < 2) throw ArgumentError("Adaln: need at least two features");
  if (mod.sigma.size() != x.size() || mod.mu.size() != x.size()) {
    throw ArgumentError("Adaln: modulation width mismatch");
  }
  Vector inv_std;
  const Matrix norm = LayerNormRows(x.transpose(), inv_std);
  return (norm.row(0).transpose().array() * mod.sigma.array() + mod.mu.array()).matrix();
}

Vector TimestepFeatures(int t, int width) {
  Vector out = Vector::Zero(width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

Matrix Forward(const DenoiserParams& p, const TokenGrid& xt, int t,
               const Condition& cond, ForwardCache* cache) {
  const DenoiserConfig& c = p.config;
  CheckGrid(c, xt);
  if (!cond.is_null() && cond.values().size() != c.cond_dim) {
    throw ArgumentError("denoiser: condition width " +
                        std::to_string(cond.values().size()) + ", expected " +
                        std::to_string(c.cond_dim));
  }
  const int D = c.d_model, S = c.seq_len, H = c.heads, hd = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ForwardCache local;
  ForwardCache& fc = cache != nullptr ? *cache : local;
  fc.valid = false;
  fc.xt = xt;
  fc.null_condition = cond.is_null();
  fc.time_features = TimestepFeatures(t, D);
  fc.cond_total = (cond.is_null() ? p.null_cond : cond.values()) +
                  p.time_w.transpose() * fc.time_features + p.time_b;
  fc.blocks.resize(p.blocks.size());

  Matrix x(S, D);
  for (int i = 0; i < S; ++i) x.row(i) = p.tok_emb.row(xt[i]) + p.pos_emb.row(i);

  for (size_t l = 0; l < p.blocks.size(); ++l) {
    const BlockParams& b = p.blocks[l];
    ForwardCache::Block& bc = fc.blocks[l];
    bc.mod_pre = b.mod_w1.transpose() * fc.cond_total + b.mod_b1;
    bc.mod_hidden = bc.mod_pre.unaryExpr(&Silu);
    bc.mod = b.mod_w2.transpose() * bc.mod_hidden + b.mod_b2;
    const auto sigma1 = bc.mod.segment(0, D).transpose();
    const auto mu1 = bc.mod.segment(D, D).transpose();
    const auto sigma2 = bc.mod.segment(2 * D, D).transpose();
    const auto mu2 = bc.mod.segment(3 * D, D).transpose();

    bc.x_in = x;
    bc.norm1 = LayerNormRows(x, bc.inv_std1);
    bc.a = (bc.norm1.array().rowwise() * sigma1.array()).rowwise() + mu1.array();
    bc.q = bc.a * b.wq;
    bc.k = bc.a * b.wk;
    bc.v = bc.a * b.wv;
    bc.attn_out.resize(S, D);
    bc.probs.resize(static_cast<size_t>(H));
    for (int h = 0; h < H; ++h) {
      Matrix scores = scale * bc.q.middleCols(h * hd, hd) * bc.k.middleCols(h * hd, hd).transpose();
      for (int r = 0; r < S; ++r) {
        scores.row(r) = Softmax(scores.row(r).transpose()).transpose();
      }
      bc.attn_out.middleCols(h * hd, hd) = scores * bc.v.middleCols(h * hd, hd);
      bc.probs[static_cast<size_t>(h)] = std::move(scores);
    }
    x += bc.attn_out * b.wo;
    x.rowwise() += b.bo.transpose();

    bc.x_mid = x;
    bc.norm2 = LayerNormRows(x, bc.inv_std2);
    bc.b = (bc.norm2.array().rowwise() * sigma2.array()).rowwise() + mu2.array();
    bc.ff_pre = bc.b * b.ff_w1;
    bc.ff_pre.rowwise() += b.ff_b1.transpose();
    bc.ff_act = bc.ff_pre.unaryExpr(&Gelu);
    x += bc.ff_act * b.ff_w2;
    x.rowwise() += b.ff_b2.transpose();
  }
  fc.x_final = x;
  Matrix logits = x * p.head_w;
  logits.rowwise() += p.head_b.transpose();
  fc.valid = true;
  return logits;
}

void Backward(const DenoiserParams& p, const ForwardCache& fc,
              const Matrix& d_logits, DenoiserParams& g, Vector* d_cond) {
  if (!fc.valid) throw UsageStateError("Backward: forward cache is missing");
  const DenoiserConfig& c = p.config;
  const int D = c.d_model, S = c.seq_len, H = c.heads, hd = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  if (d_logits.rows() != S || d_logits.cols() != c.num_tokens) {
    throw ArgumentError("Backward: gradient shape mismatch");
  }

  g.head_w += fc.x_final.transpose() * d_logits;
  g.head_b += d_logits.colwise().sum().transpose();
  Matrix dx = d_logits * p.head_w.transpose();
  Vector d_cond_total = Vector::Zero(c.cond_dim);

  for (size_t li = p.blocks.size(); li-- > 0;) {
    const BlockParams& b = p.blocks[li];
    BlockParams& gb = g.blocks[li];
    const ForwardCache::Block& bc = fc.blocks[li];
    const auto sigma1 = bc.mod.segment(0, D).transpose();
    const auto sigma2 = bc.mod.segment(2 * D, D).transpose();
    Vector d_mod(4 * D);

    // Feed-forward branch: x = x_mid + GELU(b W1 + b1) W2 + b2.
    gb.ff_w2 += bc.ff_act.transpose() * dx;
    gb.ff_b2 += dx.colwise().sum().transpose();
    Matrix d_pre = dx * b.ff_w2.transpose();
    d_pre.array() *= bc.ff_pre.unaryExpr(&GeluGrad).array();
    gb.ff_w1 += bc.b.transpose() * d_pre;
    gb.ff_b1 += d_pre.colwise().sum().transpose();
    const Matrix d_b = d_pre * b.ff_w1.transpose();
    d_mod.segment(2 * D, D) = (d_b.array() * bc.norm2.array()).colwise().sum().transpose();
    d_mod.segment(3 * D, D) = d_b.colwise().sum().transpose();
    const Matrix d_norm2 = d_b.array().rowwise() * sigma2.array();
    dx += LayerNormRowsBackward(bc.norm2, bc.inv_std2, d_norm2);

    // Attention branch: x_mid = x_in + attn_out Wo + bo.
    gb.wo += bc.attn_out.transpose() * dx;
    gb.bo += dx.colwise().sum().transpose();
    const Matrix d_attn = dx * b.wo.transpose();
    Matrix dq(S, D), dk(S, D), dv(S, D);
    for (int h = 0; h < H; ++h) {
      const Matrix& probs = bc.probs[static_cast<size_t>(h)];
      const auto d_out = d_attn.middleCols(h * hd, hd);
      const Matrix d_probs = d_out * bc.v.middleCols(h * hd, hd).transpose();
      dv.middleCols(h * hd, hd) = probs.transpose() * d_out;
      Matrix d_scores(S, S);
      for (int r = 0; r < S; ++r) {
        const double dot = d_probs.row(r).dot(probs.row(r));
        d_scores.row(r) = probs.row(r).array() * (d_probs.row(r).array() - dot);
      }
      d_scores *= scale;
      dq.middleCols(h * hd, hd) = d_scores * bc.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd) = d_scores.transpose() * bc.q.middleCols(h * hd, hd);
    }
    gb.wq += bc.a.transpose() * dq;
    gb.wk += bc.a.transpose() * dk;
    gb.wv += bc.a.transpose() * dv;
    const Matrix d_a = dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
    d_mod.segment(0, D) = (d_a.array() * bc.norm1.array()).colwise().sum().transpose();
    d_mod.segment(D, D) = d_a.colwise().sum().transpose();
    const Matrix d_norm1 = d_a.array().rowwise() * sigma1.array();
    dx += LayerNormRowsBackward(bc.norm1, bc.inv_std1, d_norm1);

    // Modulation MLP.
    gb.mod_w2 += bc.mod_hidden * d_mod.transpose();
    gb.mod_b2 += d_mod;
    Vector d_hidden = b.mod_w2 * d_mod;
    d_hidden.array() *= bc.mod_pre.unaryExpr(&SiluGrad).array();
    gb.mod_w1 += fc.cond_total * d_hidden.transpose();
    gb.mod_b1 += d_hidden;
    d_cond_total += b.mod_w1 * d_hidden;
  }

  for (int i = 0; i < S; ++i) g.tok_emb.row(fc.xt[i]) += dx.row(i);
  g.pos_emb += dx;
  g.time_w += fc.time_features * d_cond_total.transpose();
  g.time_b += d_cond_total;
  if (fc.null_condition) {
    g.null_cond += d_cond_total;
  } else if (d_cond != nullptr) {
    *d_cond = d_cond_total;
  }
}

}  // namespace clipvq
