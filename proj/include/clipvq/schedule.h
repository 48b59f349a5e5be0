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

#ifndef CLIPVQ_SCHEDULE_H_
#define CLIPVQ_SCHEDULE_H_

#include <vector>

#include "clipvq/numerics.h"

namespace clipvq {

// Mask-and-replace corruption chain over K real tokens plus the absorbing
// mask state (index K). Timesteps run 1..T; index 0 of the cumulative
// accessors is the identity (nothing corrupted yet).
//
// Per step t a non-mask token is kept with probability alpha_t + beta_t,
// replaced by each other real token with probability beta_t, and masked
// with probability gamma_t; alpha_t + K beta_t + gamma_t = 1.
class NoiseSchedule {
 public:
  // Linear cumulative schedule: cum_gamma(t) = t/T and
  // cum_alpha(t) = (1 - t/T) (1 - replace * t/T). The replacement mass
  // K * cum_beta(t) = (1 - t/T) * replace * t/T vanishes at both ends, so
  // step T masks everything. Requires T >= 1, K >= 2, replace in [0, 1).
  static NoiseSchedule Build(int steps, int num_tokens, double replace = 0.05);

  // From explicit per-step alpha_t and gamma_t (beta_t follows from the
  // column-sum constraint). Throws ArgumentError if any beta_t < 0 or if the
  // chain does not end fully masked.
  static NoiseSchedule FromSteps(int num_tokens, std::vector<double> alphas,
                                 std::vector<double> gammas);

  int steps() const { return static_cast<int>(alphas_.size()); }
  int num_tokens() const { return num_tokens_; }
  int mask() const { return num_tokens_; }

  double alpha(int t) const { return alphas_.at(Step(t)); }
  double beta(int t) const { return betas_.at(Step(t)); }
  double gamma(int t) const { return gammas_.at(Step(t)); }
  double cum_alpha(int t) const { return cum_alpha_.at(Cum(t)); }
  double cum_beta(int t) const { return cum_beta_.at(Cum(t)); }
  double cum_gamma(int t) const { return cum_gamma_.at(Cum(t)); }

 private:
  NoiseSchedule() = default;
  size_t Step(int t) const;
  size_t Cum(int t) const;
  void Finish();

  int num_tokens_ = 0;
  std::vector<double> alphas_, betas_, gammas_;
  // Length T + 1, entry 0 is the identity.
  std::vector<double> cum_alpha_, cum_beta_, cum_gamma_;
};

// (K+1)x(K+1) one-step matrix, entry (m, n) = q(x_t = m | x_{t-1} = n).
Matrix TransitionMatrix(const NoiseSchedule& s, int t);

// q(x_t | x_0) in closed form; t = 0 gives the one-hot of x0.
Vector ForwardMarginal(const NoiseSchedule& s, int t, int x0);

// Explicit product Q_t Q_{t-1} ... Q_1. Oracle only: K, T <= 64.
Matrix BruteForceCumulative(const NoiseSchedule& s, int t);

}  // namespace clipvq

#endif  // CLIPVQ_SCHEDULE_H_
