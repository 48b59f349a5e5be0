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

#include "clipvq/diffusion.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {
namespace {

void CheckLogits(const NoiseSchedule& s, const Matrix& logits, int length) {
  if (logits.rows() != length || logits.cols() != s.num_tokens()) {
    throw ArgumentError("x0 logits are " + std::to_string(logits.rows()) + "x" +
                        std::to_string(logits.cols()) + ", expected " +
                        std::to_string(length) + "x" +
                        std::to_string(s.num_tokens()));
  }
}

void CheckClean(const NoiseSchedule& s, const TokenGrid& x0) {
  for (int v : x0.tokens) {
    if (v < 0 || v >= s.num_tokens()) {
      throw ArgumentError("clean grid holds token " + std::to_string(v));
    }
  }
}

Vector RowSoftmax(const Matrix& logits, int row) {
  return Softmax(logits.row(row).transpose());
}

// q(x_t = xt | x_0 = x0) from the closed form.
double MarginalAt(const NoiseSchedule& s, int t, int x0, int xt) {
  if (xt == s.mask()) return s.cum_gamma(t);
  return s.cum_beta(t) + (xt == x0 ? s.cum_alpha(t) : 0.0);
}

// q(x_t = xt | x_{t-1} = prev) for one step.
double StepProb(const NoiseSchedule& s, int t, int prev, int xt) {
  const int mask = s.mask();
  if (prev == mask) return xt == mask ? 1.0 : 0.0;
  if (xt == mask) return s.gamma(t);
  return s.beta(t) + (xt == prev ? s.alpha(t) : 0.0);
}

}  // namespace

TokenGrid ForwardSample(const NoiseSchedule& s, const TokenGrid& x0, int t,
                        Rng& rng) {
  CheckClean(s, x0);
  TokenGrid out = x0;
  const int K = s.num_tokens();
  const double keep = s.cum_alpha(t), beta = s.cum_beta(t);
  const double gamma = s.cum_gamma(t);
  for (int i = 0; i < x0.size(); ++i) {
    if (gamma >= 1.0) {
      out[i] = s.mask();
      continue;
    }
    const double u = rng.Uniform();
    if (u < gamma) {
      out[i] = s.mask();
    } else if (u < gamma + keep) {
      out[i] = x0[i];
    } else {
      // Uniform over the K real tokens (mass K * beta).
      const double v = (u - gamma - keep) / (K * beta);
      out[i] = std::min(K - 1, static_cast<int>(v * K));
    }
  }
  return out;
}

Vector Posterior(const NoiseSchedule& s, int xt, int x0, int t) {
  const int K = s.num_tokens();
  if (t < 2 || t > s.steps()) {
    throw ArgumentError("Posterior: t = " + std::to_string(t) + " outside 2..T");
  }
  if (x0 < 0 || x0 >= K) throw ArgumentError("Posterior: x0 must be a real token");
  if (xt < 0 || xt > K) throw ArgumentError("Posterior: xt out of range");
  const double evidence = MarginalAt(s, t, x0, xt);
  if (!(evidence > 0.0)) {
    throw DegenerateInputError("Posterior: q(x_t=" + std::to_string(xt) +
                               " | x_0=" + std::to_string(x0) + ") = 0 at t=" +
                               std::to_string(t));
  }
  Vector post(K + 1);
  for (int j = 0; j <= K; ++j) {
    post[j] = MarginalAt(s, t - 1, x0, j) * StepProb(s, t, j, xt) / evidence;
  }
  return post;
}

Vector MixPosterior(const NoiseSchedule& s, const Vector& x0_probs, int xt,
                    int t) {
  const int K = s.num_tokens();
  if (x0_probs.size() != K) throw ArgumentError("MixPosterior: expected K probabilities");
  Vector out = Vector::Zero(K + 1);
  if (t == 1) {
    out.head(K) = x0_probs;
    return out;
  }
  // Posterior(j | xt, k) = q(j | k) q(xt | j) / q(xt | k); the sum over k
  // only touches the k-dependent factor q(j | k) / q(xt | k).
  Vector c = Vector::Zero(K);
  double weight = 0.0;
  for (int k = 0; k < K; ++k) {
    const double evidence = MarginalAt(s, t, k, xt);
    if (evidence > 0.0) {
      c[k] = x0_probs[k] / evidence;
      weight += x0_probs[k];
    }
  }
  if (!(weight > 0.0)) {
    throw DegenerateInputError("MixPosterior: no clean token can produce x_t=" +
                               std::to_string(xt));
  }
  const double c_sum = c.sum();
  const double ca = s.cum_alpha(t - 1), cb = s.cum_beta(t - 1);
  for (int j = 0; j < K; ++j) {
    out[j] = StepProb(s, t, j, xt) * (cb * c_sum + ca * c[j]);
  }
  out[K] = StepProb(s, t, K, xt) * s.cum_gamma(t - 1) * c_sum;
  return out / weight;
}

Matrix ReverseDist(const NoiseSchedule& s, const Matrix& x0_logits,
                   const TokenGrid& xt, int t) {
  CheckLogits(s, x0_logits, xt.size());
  Matrix out(xt.size(), s.num_tokens() + 1);
  for (int i = 0; i < xt.size(); ++i) {
    out.row(i) = MixPosterior(s, RowSoftmax(x0_logits, i), xt[i], t).transpose();
  }
  return out;
}

TermAndGrad VlbTerm(const NoiseSchedule& s, const Matrix& x0_logits,
                    const TokenGrid& x0, const TokenGrid& xt, int t) {
  CheckClean(s, x0);
  CheckLogits(s, x0_logits, x0.size());
  if (xt.size() != x0.size()) throw ArgumentError("VlbTerm: grid length mismatch");
  const int K = s.num_tokens();
  TermAndGrad out;
  out.grad_logits = Matrix::Zero(x0.size(), K);
  for (int i = 0; i < x0.size(); ++i) {
    const Vector w = RowSoftmax(x0_logits, i);
    if (t == 1) {
      out.loss -= std::log(w[x0[i]]);
      Vector g = w;
      g[x0[i]] -= 1.0;
      out.grad_logits.row(i) = g.transpose();
      continue;
    }
    const Vector q = Posterior(s, xt[i], x0[i], t);
    const Vector p = MixPosterior(s, w, xt[i], t);
    Vector ratio = Vector::Zero(K + 1);  // q_j / p_j on the support of q
    for (int j = 0; j <= K; ++j) {
      if (q[j] > 0.0) {
        out.loss += q[j] * (std::log(q[j]) - std::log(p[j]));
        ratio[j] = q[j] / p[j];
      }
    }
    // p = N / D with N = sum_k w_k m_k P_k and D = sum_k w_k m_k, hence
    // dL/dw_k = m_k (1 - <ratio, P_k>) / D.
    Vector dw = Vector::Zero(K);
    double denom = 0.0;
    for (int k = 0; k < K; ++k) {
      if (MarginalAt(s, t, k, xt[i]) > 0.0) denom += w[k];
    }
    for (int k = 0; k < K; ++k) {
      if (!(MarginalAt(s, t, k, xt[i]) > 0.0)) continue;
      dw[k] = (1.0 - ratio.dot(Posterior(s, xt[i], k, t))) / denom;
    }
    const double mean = w.dot(dw);
    out.grad_logits.row(i) = (w.array() * (dw.array() - mean)).matrix().transpose();
  }
  return out;
}

TermAndGrad TrainingLoss(const NoiseSchedule& s, const Matrix& x0_logits,
                         const TokenGrid& x0, const TokenGrid& xt, int t,
                         double aux_weight) {
  TermAndGrad out = VlbTerm(s, x0_logits, x0, xt, t);
  if (aux_weight == 0.0) return out;
  for (int i = 0; i < x0.size(); ++i) {
    Vector w = RowSoftmax(x0_logits, i);
    out.loss -= aux_weight * std::log(w[x0[i]]);
    w[x0[i]] -= 1.0;
    out.grad_logits.row(i) += aux_weight * w.transpose();
  }
  return out;
}

double PriorTerm(const NoiseSchedule& s, const TokenGrid& x0) {
  CheckClean(s, x0);
  const int T = s.steps();
  double total = 0.0;
  for (int i = 0; i < x0.size(); ++i) {
    // The prior puts all mass on the mask, so only q(mask) contributes when
    // the support is compatible; any real-token mass makes the KL infinite.
    const Vector q = ForwardMarginal(s, T, x0[i]);
    for (int j = 0; j < s.num_tokens(); ++j) {
      if (q[j] > 0.0) return std::numeric_limits<double>::infinity();
    }
    total += q[s.mask()] * std::log(q[s.mask()]);
  }
  return total;
}

double VlbLoss(const NoiseSchedule& s, const LogitsFn& model,
               const TokenGrid& x0, int t, Rng& rng) {
  const TokenGrid xt = ForwardSample(s, x0, t, rng);
  const double loss = VlbTerm(s, model(xt, t), x0, xt, t).loss;
  if (!std::isfinite(loss)) {
    throw TrainingError("VlbLoss: non-finite loss " + std::to_string(loss) +
                        " at t=" + std::to_string(t));
  }
  return loss;
}

namespace {

VlbTerms Assemble(std::vector<double> per_t, double lT) {
  VlbTerms terms;
  terms.l0 = per_t.empty() ? 0.0 : per_t[0];
  if (per_t.size() > 1) terms.l_middle.assign(per_t.begin() + 1, per_t.end());
  terms.lT = lT;
  terms.total = std::accumulate(per_t.begin(), per_t.end(), 0.0) + lT;
  return terms;
}

}  // namespace

VlbTerms StochasticVlb(const NoiseSchedule& s, const LogitsFn& model,
                       const TokenGrid& x0, Rng& rng) {
  std::vector<double> per_t;
  for (int t = 1; t <= s.steps(); ++t) per_t.push_back(VlbLoss(s, model, x0, t, rng));
  return Assemble(std::move(per_t), PriorTerm(s, x0));
}

VlbTerms ExpectedVlb(const NoiseSchedule& s, const LogitsFn& model,
                     const TokenGrid& x0) {
  CheckClean(s, x0);
  const int states = s.num_tokens() + 1;
  const int length = x0.size();
  double total_grids = std::pow(static_cast<double>(states), length);
  if (total_grids > 1e6) throw ArgumentError("ExpectedVlb: state space too large");
  const long n = static_cast<long>(total_grids);
  std::vector<double> per_t;
  for (int t = 1; t <= s.steps(); ++t) {
    double expectation = 0.0;
    TokenGrid xt = TokenGrid::Filled(length, 0);
    for (long code = 0; code < n; ++code) {
      long rest = code;
      double prob = 1.0;
      for (int i = 0; i < length; ++i) {
        xt[i] = static_cast<int>(rest % states);
        rest /= states;
        prob *= MarginalAt(s, t, x0[i], xt[i]);
      }
      if (prob == 0.0) continue;
      expectation += prob * VlbTerm(s, model(xt, t), x0, xt, t).loss;
    }
    per_t.push_back(expectation);
  }
  return Assemble(std::move(per_t), PriorTerm(s, x0));
}

Vector CfgCombine(const Vector& cond_logp, const Vector& uncond_logp,
                  double scale) {
  if (cond_logp.size() != uncond_logp.size()) {
    throw ArgumentError("CfgCombine: length mismatch " +
                        std::to_string(cond_logp.size()) + " vs " +
                        std::to_string(uncond_logp.size()));
  }
  if (scale == 1.0) return cond_logp;
  return cond_logp + (scale - 1.0) * (cond_logp - uncond_logp);
}

Vector Truncate(const Vector& probs, double ratio) {
  if (!(ratio > 0.0)) throw ArgumentError("Truncate: ratio must be > 0");
  if (ratio >= 1.0) return probs;
  std::vector<int> order(static_cast<size_t>(probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  Vector out = Vector::Zero(probs.size());
  double mass = 0.0;
  for (int idx : order) {
    out[idx] = probs[idx];
    mass += probs[idx];
    if (mass >= ratio) break;
  }
  return out / mass;
}

Vector GuidedX0Probs(const Vector& cond_logits, const Vector& uncond_logits,
                     const GuidanceOptions& options) {
  Vector logp = LogSoftmax(cond_logits);
  if (options.scale != 1.0) {
    logp = LogSoftmax(CfgCombine(logp, LogSoftmax(uncond_logits), options.scale));
  }
  return Truncate(logp.array().exp().matrix(), options.truncation);
}

TokenGrid Sample(const LogitsFn& cond, const LogitsFn& uncond,
                 const NoiseSchedule& s, int length,
                 const GuidanceOptions& options, Rng& rng) {
  const int K = s.num_tokens();
  TokenGrid x = TokenGrid::Filled(length, s.mask());
  Matrix uncond_logits;
  for (int t = s.steps(); t >= 1; --t) {
    const Matrix cond_logits = cond(x, t);
    CheckLogits(s, cond_logits, length);
    if (options.scale != 1.0) {
      uncond_logits = uncond(x, t);
      CheckLogits(s, uncond_logits, length);
    }
    TokenGrid next = x;
    for (int i = 0; i < length; ++i) {
      const Vector u = options.scale != 1.0 ? Vector(uncond_logits.row(i).transpose())
                                            : Vector();
      const Vector p0 = GuidedX0Probs(cond_logits.row(i).transpose(), u, options);
      const Vector p = MixPosterior(s, p0, x[i], t);
      next[i] = rng.Categorical(AsSpan(p));
    }
    x = std::move(next);
  }
  if (x.Contains(K)) {
    throw SamplingError("Sample: mask token survived the reverse chain");
  }
  return x;
}

}  // namespace clipvq
