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

#ifndef CLIPVQ_TRAINING_H_
#define CLIPVQ_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "clipvq/config.h"
#include "clipvq/denoiser.h"
#include "clipvq/embedding.h"
#include "clipvq/numerics.h"
#include "clipvq/quantizer.h"
#include "clipvq/schedule.h"
#include "clipvq/tensor_file.h"
#include "clipvq/token_grid.h"

namespace clipvq {

struct MetricRow {
  int64_t step = 0;
  std::string metric;
  double value = 0.0;
};

// CSV with header `step,metric,value`.
std::string MetricsCsv(const std::vector<MetricRow>& rows);

// Named tensors plus the effective config and `#@key=value` metadata lines
// (step counter, RNG seed, stage), all stored in the container echo block.
// The metadata lines are config comments, so the echo parses as a config.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::string config_text;
  std::map<std::string, std::string> meta;

  const NamedTensor& Get(const std::string& name) const;
  std::string Meta(const std::string& key) const;  // throws FormatError
};

TensorFile ToTensorFile(const Checkpoint& ckpt);
Checkpoint FromTensorFile(TensorFile file);
void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------- quantizer

QuantizerConfig QuantizerConfigFrom(const Config& cfg);
// K and |S| come from the quantizer keys, cond_dim from space.dim.
DenoiserConfig DenoiserConfigFrom(const Config& cfg);

struct QuantizerTrainConfig {
  int64_t steps = 3000;
  int batch = 16;
  AdamConfig adam{0.01, 0.5, 0.9, 1e-8};
  double tau_start = 0.9;
  double tau_end = 0.01;
  uint64_t seed = 1234;
  int64_t log_every = 100;
};

struct QuantizerTrainResult {
  QuantizerParams params;
  std::vector<MetricRow> metrics;
  std::vector<double> loss_trace;  // batch loss per step
  double hard_mse = 0.0;
};

// Minimises the soft-path reconstruction MSE with Adam while annealing the
// Gumbel temperature. Throws TrainingError on a non-finite loss.
QuantizerTrainResult TrainQuantizer(const QuantizerConfig& qc,
                                    const QuantizerTrainConfig& tc,
                                    const std::vector<Vector>& images);

// Mean MSE of decode(encode_hard(x)) against x.
double HardReconstructionMse(const QuantizerParams& p, const std::vector<Vector>& images);

Checkpoint MakeQuantizerCheckpoint(const QuantizerParams& p, const std::string& config_text,
                                   int64_t step, uint64_t seed);
QuantizerParams QuantizerFromCheckpoint(const Checkpoint& ckpt);

// ---------------------------------------------------------------- diffusion

struct DiffusionTrainConfig {
  int64_t steps = 4000;
  int batch = 16;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  double alpha = 0.25;       // pseudo-text noise; 0 conditions on the image embedding
  double aux_weight = 0.001;
  double p_drop = 0.0;       // > 0 during guidance fine-tuning
  uint64_t seed = 1234;
  int64_t step_offset = 0;   // keeps RNG streams distinct across stages
  int64_t log_every = 100;
  int threads = 1;
};

struct DiffusionExample {
  TokenGrid x0;
  int concept_id = 0;
};

struct DiffusionTrainResult {
  DenoiserParams params;
  std::vector<MetricRow> metrics;
  std::vector<double> vlb_trace;  // batch-mean VLB term per step
  int64_t examples = 0;
  int64_t dropped = 0;
  double max_null_grad = 0.0;  // largest |d loss / d null_cond| seen
};

// Diffusion training (p_drop = 0) and guidance fine-tuning (p_drop > 0)
// share this loop. Per example: draw a training grid, t ~ U{1..T}, x_t ~
// q(x_t | x_0), condition = pseudo_text(image_embed(concept), alpha), which
// is replaced by the null condition with probability p_drop.
DiffusionTrainResult TrainDenoiser(DenoiserParams init, const NoiseSchedule& schedule,
                                   const DiffusionTrainConfig& tc,
                                   const std::vector<DiffusionExample>& data,
                                   const EmbeddingSpace& space);

// Later stages carry the quantizer along so one file can drive sampling.
Checkpoint MakeDenoiserCheckpoint(const DenoiserParams& p, const std::string& config_text,
                                  const std::string& stage, int64_t step, uint64_t seed,
                                  const QuantizerParams* quantizer = nullptr);
DenoiserParams DenoiserFromCheckpoint(const Checkpoint& ckpt);

}  // namespace clipvq

#endif  // CLIPVQ_TRAINING_H_
