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

#ifndef CLIPVQ_DIFFUSION_H_
#define CLIPVQ_DIFFUSION_H_

#include <functional>
#include <vector>

#include "clipvq/numerics.h"
#include "clipvq/schedule.h"
#include "clipvq/token_grid.h"

namespace clipvq {

// Clean-token logits (|S| x K, no mask column) for a noisy grid at step t.
using LogitsFn = std::function<Matrix(const TokenGrid& xt, int t)>;

struct VlbTerms {
  double l0 = 0.0;
  std::vector<double> l_middle;  // L_1 .. L_{T-1}
  double lT = 0.0;
  double total = 0.0;
};

struct TermAndGrad {
  double loss = 0.0;
  Matrix grad_logits;  // |S| x K
};

// Independently corrupts every position of a clean grid to step t.
TokenGrid ForwardSample(const NoiseSchedule& s, const TokenGrid& x0, int t,
                        Rng& rng);

// q(x_{t-1} | x_t, x_0) for t >= 2, length K+1. Throws DegenerateInputError
// when q(x_t | x_0) = 0.
Vector Posterior(const NoiseSchedule& s, int xt, int x0, int t);

// Mixture of exact posteriors under clean-token probabilities `x0_probs`
// (length K). Clean tokens that cannot produce `xt` are dropped and the
// remaining weights renormalised. For t == 1 returns x0_probs with a zero
// mask entry.
Vector MixPosterior(const NoiseSchedule& s, const Vector& x0_probs, int xt, int t);

// p_theta(x_{t-1} | x_t) for every position, |S| x (K+1).
Matrix ReverseDist(const NoiseSchedule& s, const Matrix& x0_logits,
                   const TokenGrid& xt, int t);

// L_{t-1} summed over positions (KL for t >= 2, NLL of x0 for t == 1) and
// its gradient with respect to the clean-token logits.
TermAndGrad VlbTerm(const NoiseSchedule& s, const Matrix& x0_logits,
                    const TokenGrid& x0, const TokenGrid& xt, int t);

// VlbTerm plus aux_weight * cross-entropy of the clean-token prediction.
TermAndGrad TrainingLoss(const NoiseSchedule& s, const Matrix& x0_logits,
                         const TokenGrid& x0, const TokenGrid& xt, int t,
                         double aux_weight);

// L_T = KL(q(x_T | x_0) || all-mask prior), summed over positions.
double PriorTerm(const NoiseSchedule& s, const TokenGrid& x0);

// Draws x_t ~ q(x_t | x_0) and evaluates L_{t-1} under `model`.
double VlbLoss(const NoiseSchedule& s, const LogitsFn& model,
               const TokenGrid& x0, int t, Rng& rng);

// One stochastic draw of every term.
VlbTerms StochasticVlb(const NoiseSchedule& s, const LogitsFn& model,
                       const TokenGrid& x0, Rng& rng);

// Every term averaged exactly over x_t ~ q(x_t | x_0) by enumerating all
// (K+1)^|S| grids. Intended for tiny K and |S|.
VlbTerms ExpectedVlb(const NoiseSchedule& s, const LogitsFn& model,
                     const TokenGrid& x0);

// cond + (s - 1)(cond - uncond); renormalise with LogSoftmax afterwards.
Vector CfgCombine(const Vector& cond_logp, const Vector& uncond_logp,
                  double scale);

// Keeps the smallest top-probability set whose mass reaches `ratio` (ties to
// the lower index), zeroes the rest and renormalises.
Vector Truncate(const Vector& probs, double ratio);

struct GuidanceOptions {
  double scale = 1.0;       // s
  double truncation = 1.0;  // r
};

// Guided, truncated clean-token distribution for one position.
Vector GuidedX0Probs(const Vector& cond_logits, const Vector& uncond_logits,
                     const GuidanceOptions& options);

// Reverse chain from the all-mask grid. `uncond` is not evaluated when
// options.scale == 1.
TokenGrid Sample(const LogitsFn& cond, const LogitsFn& uncond,
                 const NoiseSchedule& s, int length,
                 const GuidanceOptions& options, Rng& rng);

}  // namespace clipvq

#endif  // CLIPVQ_DIFFUSION_H_
