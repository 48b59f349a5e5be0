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

#include "clipvq/schedule.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "clipvq/errors.h"

namespace clipvq {
namespace {

// Rounding in 1 - alpha - gamma can leave betas a few ulps below zero.
constexpr double kBetaSlack = 1e-14;

}  // namespace

NoiseSchedule NoiseSchedule::Build(int steps, int num_tokens, double replace) {
  if (steps < 1) throw ArgumentError("NoiseSchedule: T must be >= 1");
  if (num_tokens < 2) throw ArgumentError("NoiseSchedule: K must be >= 2");
  if (!(replace >= 0.0 && replace < 1.0)) {
    throw ArgumentError("NoiseSchedule: replace must lie in [0, 1)");
  }
  const double T = steps;
  std::vector<double> alphas(steps), gammas(steps);
  double prev_alpha = 1.0, prev_keep = 1.0;  // cum_alpha, 1 - cum_gamma at t-1
  for (int t = 1; t <= steps; ++t) {
    const double frac = t / T;
    const double cum_alpha = (1.0 - frac) * (1.0 - replace * frac);
    const double keep = 1.0 - frac;
    alphas[t - 1] = cum_alpha / prev_alpha;
    gammas[t - 1] = 1.0 - keep / prev_keep;
    prev_alpha = cum_alpha;
    prev_keep = keep;
  }
  // t = T: both ratios are 0/x; make the terminal step exact.
  alphas[steps - 1] = 0.0;
  gammas[steps - 1] = 1.0;
  return FromSteps(num_tokens, std::move(alphas), std::move(gammas));
}

NoiseSchedule NoiseSchedule::FromSteps(int num_tokens, std::vector<double> alphas,
                                       std::vector<double> gammas) {
  if (num_tokens < 2) throw ArgumentError("NoiseSchedule: K must be >= 2");
  if (alphas.empty() || alphas.size() != gammas.size()) {
    throw ArgumentError("NoiseSchedule: alphas/gammas must be nonempty and equal length");
  }
  NoiseSchedule s;
  s.num_tokens_ = num_tokens;
  s.alphas_ = std::move(alphas);
  s.gammas_ = std::move(gammas);
  s.betas_.resize(s.alphas_.size());
  for (size_t i = 0; i < s.alphas_.size(); ++i) {
    const double a = s.alphas_[i], g = s.gammas_[i];
    if (a < 0.0 || g < 0.0 || g > 1.0) {
      throw ArgumentError("NoiseSchedule: step " + std::to_string(i + 1) +
                          " has alpha or gamma outside [0, 1]");
    }
    double b = (1.0 - a - g) / num_tokens;
    if (b < 0.0) {
      if (b < -kBetaSlack) {
        throw ArgumentError("NoiseSchedule: step " + std::to_string(i + 1) +
                            " yields negative beta " + std::to_string(b));
      }
      b = 0.0;
    }
    s.betas_[i] = b;
  }
  s.Finish();
  if (std::abs(s.cum_gamma_.back() - 1.0) > 1e-9) {
    throw ArgumentError("NoiseSchedule: final cumulative mask probability is " +
                        std::to_string(s.cum_gamma_.back()) + ", expected 1");
  }
  return s;
}

void NoiseSchedule::Finish() {
  const size_t T = alphas_.size();
  cum_alpha_.assign(T + 1, 1.0);
  cum_gamma_.assign(T + 1, 0.0);
  cum_beta_.assign(T + 1, 0.0);
  double keep = 1.0;
  for (size_t t = 1; t <= T; ++t) {
    cum_alpha_[t] = cum_alpha_[t - 1] * alphas_[t - 1];
    keep *= 1.0 - gammas_[t - 1];
    cum_gamma_[t] = 1.0 - keep;
    cum_beta_[t] =
        std::max(0.0, (keep - cum_alpha_[t]) / static_cast<double>(num_tokens_));
  }
}

size_t NoiseSchedule::Step(int t) const {
  if (t < 1 || t > steps()) {
    throw ArgumentError("timestep " + std::to_string(t) + " outside 1.." +
                        std::to_string(steps()));
  }
  return static_cast<size_t>(t - 1);
}

size_t NoiseSchedule::Cum(int t) const {
  if (t < 0 || t > steps()) {
    throw ArgumentError("timestep " + std::to_string(t) + " outside 0.." +
                        std::to_string(steps()));
  }
  return static_cast<size_t>(t);
}

Matrix TransitionMatrix(const NoiseSchedule& s, int t) {
  const int K = s.num_tokens();
  const double a = s.alpha(t), b = s.beta(t), g = s.gamma(t);
  Matrix q = Matrix::Constant(K + 1, K + 1, b);
  for (int n = 0; n < K; ++n) {
    q(n, n) = a + b;
    q(K, n) = g;
  }
  q.col(K).setZero();
  q(K, K) = 1.0;
  return q;
}

Vector ForwardMarginal(const NoiseSchedule& s, int t, int x0) {
  const int K = s.num_tokens();
  if (x0 < 0 || x0 >= K) {
    throw ArgumentError("ForwardMarginal: x0 = " + std::to_string(x0) +
                        " is not a real token (K = " + std::to_string(K) + ")");
  }
  Vector p = Vector::Constant(K + 1, s.cum_beta(t));
  p[x0] = s.cum_alpha(t) + s.cum_beta(t);
  p[K] = s.cum_gamma(t);
  return p;
}

Matrix BruteForceCumulative(const NoiseSchedule& s, int t) {
  if (s.num_tokens() > 64 || s.steps() > 64) {
    throw ArgumentError("BruteForceCumulative: oracle limited to K, T <= 64");
  }
  const int K = s.num_tokens();
  Matrix acc = Matrix::Identity(K + 1, K + 1);
  for (int step = 1; step <= t; ++step) acc = TransitionMatrix(s, step) * acc;
  return acc;
}

}  // namespace clipvq
