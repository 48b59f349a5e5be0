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

#ifndef CLIPVQ_PIPELINE_H_
#define CLIPVQ_PIPELINE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "clipvq/config.h"
#include "clipvq/dataset.h"
#include "clipvq/denoiser.h"
#include "clipvq/diffusion.h"
#include "clipvq/eval.h"
#include "clipvq/quantizer.h"
#include "clipvq/schedule.h"
#include "clipvq/training.h"

namespace clipvq {

// Config → component settings.
DatasetConfig DatasetConfigFrom(const Config& cfg);
EmbeddingSpace SpaceFrom(const Config& cfg);
NoiseSchedule ScheduleFrom(const Config& cfg);
QuantizerTrainConfig QuantizerTrainConfigFrom(const Config& cfg);
// stage is "diffusion" or "cfg".
DiffusionTrainConfig DiffusionTrainConfigFrom(const Config& cfg, const std::string& stage);

Dataset GenData(const Config& cfg);

std::vector<DiffusionExample> EncodeDataset(const QuantizerParams& q, const Dataset& data);

// Initialises a denoiser from the config seed and runs diffusion training.
DiffusionTrainResult RunDiffusionStage(const Config& cfg, const QuantizerParams& q,
                                       const Dataset& data);
DiffusionTrainResult RunCfgStage(const Config& cfg, DenoiserParams init, const QuantizerParams& q,
                                 const Dataset& data);

// Samples `n` grids conditioned on the text embedding of `concept`. Sample i
// uses the RNG stream (seed, concept, i), so results do not depend on n.
std::vector<TokenGrid> SampleConcept(const DenoiserParams& denoiser, const NoiseSchedule& schedule,
                                     const EmbeddingSpace& space, int concept_id, int n,
                                     const GuidanceOptions& options, uint64_t seed);

struct EvalOptions {
  GuidanceOptions guidance{3.0, 0.9};
  int samples_per_concept = 64;
  int best_of = 16;
  int feature_dim = 16;
  uint64_t seed = 99;
};
EvalOptions EvalOptionsFrom(const Config& cfg);

struct EvalRow {
  std::string split;
  std::string metric;
  double value = 0.0;
  std::string note;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  // clip[c][c'] = best-of-N clip score of concept c's candidates against the
  // text of concept c'.
  Matrix clip_matrix;
  int concepts_true_best = 0;  // concepts whose true text scores highest

  double Get(const std::string& split, const std::string& metric) const;
};
std::string EvalCsv(const EvalReport& report);

// Generated split: text-conditioned samples per concept. Reference split:
// the first samples_per_concept dataset images of each concept.
EvalReport Evaluate(const DenoiserParams& denoiser, const QuantizerParams& q,
                    const NoiseSchedule& schedule, const Dataset& data,
                    const EvalOptions& options);

struct SweepRow {
  double s = 0.0;
  double r = 0.0;
  double alpha = 0.0;
  double clip_surrogate = 0.0;
  double frechet = 0.0;
  double is_surrogate = 0.0;
  double concept_acc = 0.0;

  bool operator==(const SweepRow&) const = default;
};

std::string SweepCsv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> ParseSweepCsv(const std::string& text);

// One row per (s, r), s-major in the order given. Every grid point reuses
// the same sampling seed.
std::vector<SweepRow> SweepGrid(const DenoiserParams& denoiser, const QuantizerParams& q,
                                const NoiseSchedule& schedule, const Dataset& data,
                                const EvalOptions& base, const std::vector<double>& grid_s,
                                const std::vector<double>& grid_r, double alpha);

}  // namespace clipvq

#endif  // CLIPVQ_PIPELINE_H_
