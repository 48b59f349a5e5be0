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

#include "clipvq/training.h"

#include <cmath>
#include <sstream>
#include <thread>

#include "clipvq/diffusion.h"
#include "clipvq/errors.h"
#include "clipvq/params.h"

namespace clipvq {

std::string MetricsCsv(const std::vector<MetricRow>& rows) {
  std::string out = "step,metric,value\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + r.metric + "," + FormatDouble(r.value) + "\n";
  }
  return out;
}

const NamedTensor& Checkpoint::Get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

std::string Checkpoint::Meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint has no '" + key + "' entry");
  return it->second;
}

TensorFile ToTensorFile(const Checkpoint& ckpt) {
  TensorFile file;
  for (const auto& t : ckpt.tensors) file.Add(t);
  file.echo = ckpt.config_text;
  for (const auto& [k, v] : ckpt.meta) file.echo += "#@" + k + "=" + v + "\n";
  return file;
}

Checkpoint FromTensorFile(TensorFile file) {
  Checkpoint ckpt;
  ckpt.tensors = std::move(file.tensors);
  std::istringstream in(file.echo);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("#@", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("bad checkpoint metadata '" + line + "'");
      ckpt.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
    } else {
      ckpt.config_text += line + "\n";
    }
  }
  return ckpt;
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  SaveTensorFile(ToTensorFile(ckpt), path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  return FromTensorFile(LoadTensorFile(path));
}

QuantizerConfig QuantizerConfigFrom(const Config& cfg) {
  QuantizerConfig qc;
  qc.codebook_size = static_cast<int>(cfg.GetInt("quantizer.codebook_size"));
  qc.dim_z = static_cast<int>(cfg.GetInt("quantizer.dim_z"));
  qc.patch = static_cast<int>(cfg.GetInt("quantizer.patch"));
  qc.image_side = static_cast<int>(cfg.GetInt("quantizer.image_side"));
  qc.Validate();
  return qc;
}

DenoiserConfig DenoiserConfigFrom(const Config& cfg) {
  const QuantizerConfig qc = QuantizerConfigFrom(cfg);
  DenoiserConfig dc;
  dc.num_tokens = qc.codebook_size;
  dc.seq_len = qc.patches_per_image();
  dc.d_model = static_cast<int>(cfg.GetInt("denoiser.d_model"));
  dc.heads = static_cast<int>(cfg.GetInt("denoiser.heads"));
  dc.blocks = static_cast<int>(cfg.GetInt("denoiser.blocks"));
  dc.cond_hidden = static_cast<int>(cfg.GetInt("denoiser.cond_hidden"));
  dc.ff_mult = static_cast<int>(cfg.GetInt("denoiser.ff_mult"));
  dc.cond_dim = static_cast<int>(cfg.GetInt("space.dim"));
  dc.Validate();
  return dc;
}

// ---------------------------------------------------------------- quantizer

QuantizerTrainResult TrainQuantizer(const QuantizerConfig& qc,
                                    const QuantizerTrainConfig& tc,
                                    const std::vector<Vector>& images) {
  if (images.empty()) throw ArgumentError("TrainQuantizer: empty dataset");
  if (tc.steps < 1 || tc.batch < 1) throw ArgumentError("TrainQuantizer: bad step/batch count");
  Rng init_rng = Rng::Stream(tc.seed, 0xC0DE);
  QuantizerTrainResult result;
  result.params = QuantizerParams::Init(qc, init_rng);
  QuantizerParams& params = result.params;
  AdamState adam(ParamCount(params), tc.adam);
  QuantizerParams grad = QuantizerParams::Zeros(qc);
  double window = 0.0;
  for (int64_t step = 0; step < tc.steps; ++step) {
    const double tau = AnnealTau(step, tc.steps - 1, tc.tau_start, tc.tau_end);
    grad = ZerosLike(grad);
    double loss = 0.0;
    for (int b = 0; b < tc.batch; ++b) {
      Rng rng = Rng::Stream(tc.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(b));
      const Vector& img = images[static_cast<size_t>(rng.UniformInt(static_cast<int>(images.size())))];
      loss += SoftReconstructionLoss(params, img, tau, rng, &grad);
    }
    loss /= tc.batch;
    if (!std::isfinite(loss)) {
      throw TrainingError("quantizer diverged at step " + std::to_string(step) +
                          " (tau=" + FormatDouble(tau) + ", loss=" + FormatDouble(loss) + ")");
    }
    Scale(grad, 1.0 / tc.batch);
    std::vector<double> flat = Flatten(params);
    adam.Step(flat, Flatten(grad));
    Unflatten(params, flat);
    result.loss_trace.push_back(loss);
    window += loss;
    if ((step + 1) % tc.log_every == 0 || step + 1 == tc.steps) {
      const int64_t n = (step + 1) % tc.log_every == 0 ? tc.log_every : (step + 1) % tc.log_every;
      result.metrics.push_back({step + 1, "quantizer/loss", window / static_cast<double>(n)});
      result.metrics.push_back({step + 1, "quantizer/tau", tau});
      window = 0.0;
    }
  }
  result.hard_mse = HardReconstructionMse(params, images);
  result.metrics.push_back({tc.steps, "quantizer/hard_mse", result.hard_mse});
  return result;
}

double HardReconstructionMse(const QuantizerParams& p, const std::vector<Vector>& images) {
  if (images.empty()) throw ArgumentError("HardReconstructionMse: empty dataset");
  double total = 0.0;
  for (const auto& img : images) total += Mse(Decode(p, EncodeHard(p, img)), img);
  return total / static_cast<double>(images.size());
}

Checkpoint MakeQuantizerCheckpoint(const QuantizerParams& p, const std::string& config_text,
                                   int64_t step, uint64_t seed) {
  TensorFile file;
  AppendTensors(p, "quantizer.", file);
  Checkpoint ckpt;
  ckpt.tensors = std::move(file.tensors);
  ckpt.config_text = config_text;
  ckpt.meta["stage"] = "quantizer";
  ckpt.meta["step"] = std::to_string(step);
  ckpt.meta["rng_seed"] = std::to_string(seed);
  return ckpt;
}

QuantizerParams QuantizerFromCheckpoint(const Checkpoint& ckpt) {
  const Config cfg = Config::Parse(ckpt.config_text);
  QuantizerParams p = QuantizerParams::Zeros(QuantizerConfigFrom(cfg));
  TensorFile file;
  file.tensors = ckpt.tensors;
  ReadTensors(p, "quantizer.", file);
  return p;
}

// ---------------------------------------------------------------- diffusion

namespace {

struct ExampleOutcome {
  double vlb = 0.0;
  double loss = 0.0;
  bool dropped = false;
  int t = 0;
};

ExampleOutcome RunExample(const DenoiserParams& params, const NoiseSchedule& schedule,
                          const DiffusionTrainConfig& tc,
                          const std::vector<DiffusionExample>& data,
                          const EmbeddingSpace& space, int64_t step, int index,
                          DenoiserParams& grad) {
  Rng rng = Rng::Stream(tc.seed, static_cast<uint64_t>(tc.step_offset + step),
                        static_cast<uint64_t>(index));
  const DiffusionExample& ex = data[static_cast<size_t>(rng.UniformInt(static_cast<int>(data.size())))];
  ExampleOutcome out;
  out.t = 1 + rng.UniformInt(schedule.steps());
  const TokenGrid xt = ForwardSample(schedule, ex.x0, out.t, rng);
  const UnitEmbedding image = ImageEmbed(space, ex.concept_id, rng);
  const UnitEmbedding cond = tc.alpha > 0.0 ? PseudoText(image, tc.alpha, rng) : image;
  out.dropped = tc.p_drop > 0.0 && rng.Uniform() < tc.p_drop;
  const Condition condition =
      out.dropped ? Condition::Null() : Condition::Embedding(cond.values());
  ForwardCache cache;
  const Matrix logits = Forward(params, xt, out.t, condition, &cache);
  const TermAndGrad term = TrainingLoss(schedule, logits, ex.x0, xt, out.t, tc.aux_weight);
  out.loss = term.loss;
  out.vlb = tc.aux_weight == 0.0 ? term.loss
                                 : VlbTerm(schedule, logits, ex.x0, xt, out.t).loss;
  if (!std::isfinite(out.loss)) {
    throw TrainingError("denoiser loss is non-finite at step " + std::to_string(step) +
                        ", example " + std::to_string(index) + ", t=" + std::to_string(out.t));
  }
  grad = ZerosLike(grad);
  Backward(params, cache, term.grad_logits, grad);
  return out;
}

}  // namespace

DiffusionTrainResult TrainDenoiser(DenoiserParams init, const NoiseSchedule& schedule,
                                   const DiffusionTrainConfig& tc,
                                   const std::vector<DiffusionExample>& data,
                                   const EmbeddingSpace& space) {
  if (data.empty()) throw ArgumentError("TrainDenoiser: empty dataset");
  if (tc.steps < 1 || tc.batch < 1) throw ArgumentError("TrainDenoiser: bad step/batch count");
  if (!(tc.p_drop >= 0.0 && tc.p_drop <= 1.0)) throw ArgumentError("TrainDenoiser: p_drop outside [0,1]");
  if (schedule.num_tokens() != init.config.num_tokens) {
    throw ArgumentError("TrainDenoiser: schedule and denoiser disagree on K");
  }
  DiffusionTrainResult result;
  result.params = std::move(init);
  DenoiserParams& params = result.params;
  AdamState adam(ParamCount(params), tc.adam);
  const int threads = std::max(1, std::min(tc.threads, tc.batch));
  std::vector<DenoiserParams> grads(static_cast<size_t>(threads == 1 ? 1 : tc.batch),
                                    ZerosLike(params));
  std::vector<ExampleOutcome> outcomes(static_cast<size_t>(tc.batch));
  DenoiserParams total = ZerosLike(params);
  double window_vlb = 0.0, window_loss = 0.0;
  int64_t window_n = 0;

  for (int64_t step = 0; step < tc.steps; ++step) {
    total = ZerosLike(total);
    if (threads == 1) {
      for (int b = 0; b < tc.batch; ++b) {
        outcomes[static_cast<size_t>(b)] =
            RunExample(params, schedule, tc, data, space, step, b, grads[0]);
        AddInto(total, grads[0]);
      }
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
      for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (int b = w; b < tc.batch; b += threads) {
              outcomes[static_cast<size_t>(b)] = RunExample(
                  params, schedule, tc, data, space, step, b, grads[static_cast<size_t>(b)]);
            }
          } catch (...) {
            errors[static_cast<size_t>(w)] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      for (int b = 0; b < tc.batch; ++b) AddInto(total, grads[static_cast<size_t>(b)]);
    }
    Scale(total, 1.0 / tc.batch);
    double vlb = 0.0, loss = 0.0;
    for (const auto& o : outcomes) {
      vlb += o.vlb;
      loss += o.loss;
      result.dropped += o.dropped;
    }
    vlb /= tc.batch;
    loss /= tc.batch;
    result.examples += tc.batch;
    result.max_null_grad = std::max(result.max_null_grad, total.null_cond.cwiseAbs().maxCoeff());
    if (!AllFinite(total)) {
      throw TrainingError("denoiser gradient is non-finite at step " + std::to_string(step));
    }
    std::vector<double> flat = Flatten(params);
    adam.Step(flat, Flatten(total));
    Unflatten(params, flat);

    result.vlb_trace.push_back(vlb);
    window_vlb += vlb;
    window_loss += loss;
    ++window_n;
    if ((step + 1) % tc.log_every == 0 || step + 1 == tc.steps) {
      const int64_t at = tc.step_offset + step + 1;
      result.metrics.push_back({at, "denoiser/vlb_term", window_vlb / window_n});
      result.metrics.push_back({at, "denoiser/loss", window_loss / window_n});
      window_vlb = window_loss = 0.0;
      window_n = 0;
    }
  }
  if (tc.p_drop > 0.0) {
    result.metrics.push_back({tc.step_offset + tc.steps, "denoiser/drop_fraction",
                              static_cast<double>(result.dropped) / result.examples});
  }
  return result;
}

Checkpoint MakeDenoiserCheckpoint(const DenoiserParams& p, const std::string& config_text,
                                  const std::string& stage, int64_t step, uint64_t seed,
                                  const QuantizerParams* quantizer) {
  TensorFile file;
  if (quantizer != nullptr) AppendTensors(*quantizer, "quantizer.", file);
  AppendTensors(p, "denoiser.", file);
  Checkpoint ckpt;
  ckpt.tensors = std::move(file.tensors);
  ckpt.config_text = config_text;
  ckpt.meta["stage"] = stage;
  ckpt.meta["step"] = std::to_string(step);
  ckpt.meta["rng_seed"] = std::to_string(seed);
  return ckpt;
}

DenoiserParams DenoiserFromCheckpoint(const Checkpoint& ckpt) {
  const Config cfg = Config::Parse(ckpt.config_text);
  DenoiserParams p = DenoiserParams::Zeros(DenoiserConfigFrom(cfg));
  TensorFile file;
  file.tensors = ckpt.tensors;
  ReadTensors(p, "denoiser.", file);
  return p;
}

}  // namespace clipvq
