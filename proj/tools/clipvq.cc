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

// clipvq: dataset synthesis, the three training stages, sampling,
// evaluation and the guidance/truncation ablation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clipvq/config.h"
#include "clipvq/dataset.h"
#include "clipvq/errors.h"
#include "clipvq/eval.h"
#include "clipvq/params.h"
#include "clipvq/pipeline.h"
#include "clipvq/tensor_file.h"
#include "clipvq/training.h"

namespace fs = std::filesystem;
using namespace clipvq;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kIo = 3 };

struct Options {
  std::string config;
  std::vector<std::string> overrides;  // key=value
  int threads = 0;                     // 0 keeps the config value
  std::string data;
  std::string out;
  std::string ckpt;
  std::string quantizer;
  std::string metrics;
  std::optional<uint64_t> seed;
  int concept_index = 0;
  std::optional<double> s;
  std::optional<double> r;
  int n = 16;
  int best_of = 0;
  std::vector<double> grid_s;
  std::vector<double> grid_r;
  std::vector<double> grid_alpha;
};

void ApplyOverrides(Config& cfg, const Options& o) {
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.threads > 0) cfg.Set("threads", std::to_string(o.threads));
}

// --config wins; otherwise the echo of `fallback` (a prerequisite checkpoint);
// otherwise defaults.
Config ResolveConfig(const Options& o, const Checkpoint* fallback = nullptr) {
  Config cfg;
  if (!o.config.empty()) {
    cfg = Config::Load(o.config);
  } else if (fallback != nullptr) {
    cfg = Config::Parse(fallback->config_text);
  }
  ApplyOverrides(cfg, o);
  return cfg;
}

Checkpoint LoadPrerequisite(const std::string& path, const std::string& flag,
                            const std::string& stage, const std::string& command) {
  if (path.empty()) {
    throw UsageError(command + " needs the " + stage + " checkpoint (" + flag + ")");
  }
  if (!fs::exists(path)) {
    throw UsageError(command + ": " + stage + " checkpoint '" + path + "' does not exist (" +
                     flag + ")");
  }
  return LoadCheckpoint(path);
}

bool HasPrefix(const Checkpoint& ckpt, const std::string& prefix) {
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

Dataset RequireData(const Options& o, const std::string& command) {
  if (o.data.empty()) throw UsageError(command + " needs the dataset directory (--data)");
  if (!fs::is_directory(o.data)) {
    throw UsageError(command + ": dataset directory '" + o.data + "' does not exist (--data)");
  }
  return LoadDataset(o.data);
}

void RequireOut(const Options& o, const std::string& command) {
  if (o.out.empty()) throw UsageError(command + " needs an output path (--out)");
}

void WriteMetrics(const Options& o, const std::vector<MetricRow>& rows) {
  const std::string path = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
  WriteFileAtomic(path, MetricsCsv(rows));
}

QuantizerParams QuantizerFor(const Options& o, const Checkpoint& ckpt, const std::string& command) {
  if (!o.quantizer.empty()) {
    return QuantizerFromCheckpoint(LoadPrerequisite(o.quantizer, "--quantizer", "quantizer", command));
  }
  if (!HasPrefix(ckpt, "quantizer.")) {
    throw UsageError(command + " needs the quantizer checkpoint (--quantizer)");
  }
  return QuantizerFromCheckpoint(ckpt);
}

DenoiserParams DenoiserFor(const Checkpoint& ckpt, const std::string& command) {
  if (!HasPrefix(ckpt, "denoiser.")) {
    throw UsageError(command + ": --ckpt holds no denoiser (stage '" +
                     (ckpt.meta.count("stage") ? ckpt.meta.at("stage") : std::string("?")) +
                     "'); pass a diffusion or cfg checkpoint");
  }
  return DenoiserFromCheckpoint(ckpt);
}

// ---------------------------------------------------------------- commands

int CmdGenData(const Options& o) {
  RequireOut(o, "gen-data");
  Config cfg = ResolveConfig(o);
  if (o.seed) cfg.Set("data.seed", std::to_string(*o.seed));
  const Dataset data = GenData(cfg);
  SaveDataset(data, o.out, cfg.ToText());
  std::cout << "wrote " << data.size() << " images to " << o.out << "\n";
  return kOk;
}

int CmdTrainQuantizer(const Options& o) {
  RequireOut(o, "train-quantizer");
  Config cfg = ResolveConfig(o);
  if (o.seed) cfg.Set("seed", std::to_string(*o.seed));
  const Dataset data = RequireData(o, "train-quantizer");
  const QuantizerTrainConfig tc = QuantizerTrainConfigFrom(cfg);
  const QuantizerTrainResult result = TrainQuantizer(QuantizerConfigFrom(cfg), tc, data.images);
  SaveCheckpoint(MakeQuantizerCheckpoint(result.params, cfg.ToText(), tc.steps, tc.seed), o.out);
  WriteMetrics(o, result.metrics);
  std::cout << "hard-path reconstruction mse " << FormatDouble(result.hard_mse) << "\n";
  return kOk;
}

int CmdTrainDiffusion(const Options& o) {
  RequireOut(o, "train-diffusion");
  const Checkpoint qckpt = LoadPrerequisite(o.ckpt, "--ckpt", "quantizer", "train-diffusion");
  Config cfg = ResolveConfig(o, &qckpt);
  if (o.seed) cfg.Set("seed", std::to_string(*o.seed));
  if (!HasPrefix(qckpt, "quantizer.")) {
    throw UsageError("train-diffusion: --ckpt holds no quantizer tensors");
  }
  const QuantizerParams q = QuantizerFromCheckpoint(qckpt);
  const Dataset data = RequireData(o, "train-diffusion");
  const DiffusionTrainResult result = RunDiffusionStage(cfg, q, data);
  SaveCheckpoint(MakeDenoiserCheckpoint(result.params, cfg.ToText(), "diffusion",
                                        cfg.GetInt("diffusion.steps"),
                                        static_cast<uint64_t>(cfg.GetInt("seed")), &q),
                 o.out);
  WriteMetrics(o, result.metrics);
  std::cout << "final vlb term " << FormatDouble(result.vlb_trace.back()) << "\n";
  return kOk;
}

int CmdFinetuneCfg(const Options& o) {
  RequireOut(o, "finetune-cfg");
  const Checkpoint dckpt = LoadPrerequisite(o.ckpt, "--ckpt", "diffusion", "finetune-cfg");
  Config cfg = ResolveConfig(o, &dckpt);
  if (o.seed) cfg.Set("seed", std::to_string(*o.seed));
  DenoiserParams init = DenoiserFor(dckpt, "finetune-cfg");
  const QuantizerParams q = QuantizerFor(o, dckpt, "finetune-cfg");
  const Dataset data = RequireData(o, "finetune-cfg");
  const DiffusionTrainResult result = RunCfgStage(cfg, std::move(init), q, data);
  SaveCheckpoint(MakeDenoiserCheckpoint(result.params, cfg.ToText(), "cfg",
                                        cfg.GetInt("diffusion.steps") + cfg.GetInt("cfg.steps"),
                                        static_cast<uint64_t>(cfg.GetInt("seed")), &q),
                 o.out);
  WriteMetrics(o, result.metrics);
  std::cout << "dropped " << result.dropped << " of " << result.examples << " conditions\n";
  return kOk;
}

int CmdSample(const Options& o) {
  RequireOut(o, "sample");
  const Checkpoint ckpt = LoadPrerequisite(o.ckpt, "--ckpt", "cfg", "sample");
  const Config cfg = ResolveConfig(o, &ckpt);
  const DenoiserParams denoiser = DenoiserFor(ckpt, "sample");
  const QuantizerParams q = QuantizerFor(o, ckpt, "sample");
  const EmbeddingSpace space = o.data.empty() ? SpaceFrom(cfg) : LoadDataset(o.data).space;
  if (o.concept_index < 0 || o.concept_index >= space.concepts) {
    throw UsageError("--concept " + std::to_string(o.concept_index) + " outside [0, " +
                     std::to_string(space.concepts) + ")");
  }
  if (o.n < 1) throw UsageError("--n must be positive");
  if (o.best_of < 0) throw UsageError("--best-of must be positive");
  GuidanceOptions g{o.s.value_or(cfg.GetDouble("sample.guide")),
                    o.r.value_or(cfg.GetDouble("sample.truncation"))};
  if (!(g.truncation > 0.0)) throw UsageError("--r must be positive");
  const uint64_t seed = o.seed.value_or(static_cast<uint64_t>(cfg.GetInt("eval.seed")));
  const NoiseSchedule schedule = ScheduleFrom(cfg);
  const int per_output = std::max(1, o.best_of);
  const std::vector<TokenGrid> candidates =
      SampleConcept(denoiser, schedule, space, o.concept_index, o.n * per_output, g, seed);

  std::vector<TokenGrid> chosen;
  std::vector<double> scores;
  if (o.best_of > 0) {
    if (o.data.empty()) throw UsageError("--best-of needs the dataset directory (--data)");
    const Dataset data = LoadDataset(o.data);
    const ImageScorer scorer(data.patterns, data.space);
    const UnitEmbedding text = TextEmbed(space, o.concept_index);
    for (int i = 0; i < o.n; ++i) {
      std::vector<TokenGrid> group(candidates.begin() + i * per_output,
                                   candidates.begin() + (i + 1) * per_output);
      const BestOf best = BestOfN(group, text, q, scorer);
      chosen.push_back(best.grid);
      scores.push_back(best.score);
    }
  } else {
    chosen = candidates;
  }

  std::error_code ec;
  fs::create_directories(fs::path(o.out) / "images", ec);
  if (ec) throw IoError("cannot create " + o.out + ": " + ec.message());
  std::ostringstream tokens;
  tokens << "file\tconcept\tscore\ttokens\n";
  for (size_t i = 0; i < chosen.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.f32", i);
    WriteFileAtomic(fs::path(o.out) / name, ImageToF32Bytes(Decode(q, chosen[i])));
    tokens << name << "\t" << o.concept_index << "\t"
           << (scores.empty() ? std::string("") : FormatDouble(scores[i])) << "\t";
    for (int k = 0; k < chosen[i].size(); ++k) tokens << (k ? " " : "") << chosen[i][k];
    tokens << "\n";
  }
  WriteFileAtomic(fs::path(o.out) / "samples.tsv", tokens.str());
  std::cout << "wrote " << chosen.size() << " samples to " << o.out << "\n";
  return kOk;
}

int CmdEval(const Options& o) {
  const Checkpoint ckpt = LoadPrerequisite(o.ckpt, "--ckpt", "cfg", "eval");
  const Config cfg = ResolveConfig(o, &ckpt);
  if (o.metrics.empty()) throw UsageError("eval needs an output path (--metrics-out)");
  const DenoiserParams denoiser = DenoiserFor(ckpt, "eval");
  const QuantizerParams q = QuantizerFor(o, ckpt, "eval");
  const Dataset data = RequireData(o, "eval");
  EvalOptions options = EvalOptionsFrom(cfg);
  if (o.s) options.guidance.scale = *o.s;
  if (o.r) options.guidance.truncation = *o.r;
  if (o.best_of > 0) options.best_of = o.best_of;
  if (o.seed) options.seed = *o.seed;
  const EvalReport report = Evaluate(denoiser, q, ScheduleFrom(cfg), data, options);
  WriteFileAtomic(o.metrics, EvalCsv(report));
  std::cout << EvalCsv(report);
  return kOk;
}

int CmdAblate(const Options& o) {
  RequireOut(o, "ablate");
  if (o.grid_s.empty()) throw UsageError("ablate: empty guidance grid (--grid-s)");
  if (o.grid_r.empty()) throw UsageError("ablate: empty truncation grid (--grid-r)");
  for (double r : o.grid_r) {
    if (!(r > 0.0)) throw UsageError("ablate: truncation values must be positive (--grid-r)");
  }
  const Checkpoint ckpt = LoadPrerequisite(o.ckpt, "--ckpt", "cfg", "ablate");
  const Config cfg = ResolveConfig(o, &ckpt);
  const QuantizerParams q = QuantizerFor(o, ckpt, "ablate");
  const Dataset data = RequireData(o, "ablate");
  EvalOptions options = EvalOptionsFrom(cfg);
  if (o.seed) options.seed = *o.seed;
  const NoiseSchedule schedule = ScheduleFrom(cfg);

  std::vector<SweepRow> rows;
  if (o.grid_alpha.empty()) {
    const DenoiserParams denoiser = DenoiserFor(ckpt, "ablate");
    rows = SweepGrid(denoiser, q, schedule, data, options, o.grid_s, o.grid_r,
                     cfg.GetDouble("diffusion.alpha"));
  } else {
    // Each alpha needs its own diffusion + guidance fine-tuning run.
    for (double alpha : o.grid_alpha) {
      if (!(alpha >= 0.0 && alpha < 1.0)) throw UsageError("ablate: alpha must lie in [0, 1) (--grid-alpha)");
      Config run = cfg;
      run.Set("diffusion.alpha", FormatDouble(alpha));
      std::cerr << "alpha " << FormatDouble(alpha) << ": training\n";
      DiffusionTrainResult trained = RunDiffusionStage(run, q, data);
      trained = RunCfgStage(run, std::move(trained.params), q, data);
      const auto part = SweepGrid(trained.params, q, schedule, data, options, o.grid_s, o.grid_r, alpha);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  WriteFileAtomic(o.out, SweepCsv(rows));
  std::cout << "wrote " << rows.size() << " rows to " << o.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clipvq: language-free text-to-image discrete diffusion at toy scale"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "worker threads for batch gradients")->check(CLI::PositiveNumber);

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "config file (key = value lines)");
    cmd->add_option("--set", o.overrides, "config override key=value (repeatable)");
    cmd->add_option("--threads", o.threads, "worker threads for batch gradients")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "synthesise the toy dataset and embedding space");
  add_common(gen);
  gen->add_option("--seed", o.seed, "dataset seed");
  gen->add_option("--out", o.out, "output directory");

  auto* tq = app.add_subcommand("train-quantizer", "train the patch quantizer");
  add_common(tq);
  tq->add_option("--data", o.data, "dataset directory");
  tq->add_option("--out", o.out, "checkpoint path");
  tq->add_option("--seed", o.seed, "training seed");
  tq->add_option("--metrics", o.metrics, "metrics CSV path (default <out>.metrics.csv)");

  auto* td = app.add_subcommand("train-diffusion", "train the denoiser on image embeddings");
  add_common(td);
  td->add_option("--data", o.data, "dataset directory");
  td->add_option("--ckpt", o.ckpt, "quantizer checkpoint");
  td->add_option("--out", o.out, "checkpoint path");
  td->add_option("--seed", o.seed, "training seed");
  td->add_option("--metrics", o.metrics, "metrics CSV path (default <out>.metrics.csv)");

  auto* fc = app.add_subcommand("finetune-cfg", "fine-tune with condition dropout");
  add_common(fc);
  fc->add_option("--data", o.data, "dataset directory");
  fc->add_option("--ckpt", o.ckpt, "diffusion checkpoint");
  fc->add_option("--quantizer", o.quantizer, "quantizer checkpoint (default: the one in --ckpt)");
  fc->add_option("--out", o.out, "checkpoint path");
  fc->add_option("--seed", o.seed, "training seed");
  fc->add_option("--metrics", o.metrics, "metrics CSV path (default <out>.metrics.csv)");

  auto* sm = app.add_subcommand("sample", "sample images from a concept's text embedding");
  add_common(sm);
  sm->add_option("--ckpt", o.ckpt, "diffusion or cfg checkpoint");
  sm->add_option("--quantizer", o.quantizer, "quantizer checkpoint (default: the one in --ckpt)");
  sm->add_option("--data", o.data, "dataset directory (space and patterns)");
  sm->add_option("--concept", o.concept_index, "concept index");
  sm->add_option("--s", o.s, "guidance scale (default sample.guide)");
  sm->add_option("--r", o.r, "truncation ratio (default sample.truncation)");
  sm->add_option("--n", o.n, "number of output images");
  sm->add_option("--seed", o.seed, "sampling seed (default eval.seed)");
  sm->add_option("--best-of", o.best_of, "keep the best of N candidates per output");
  sm->add_option("--out", o.out, "output directory");

  auto* ev = app.add_subcommand("eval", "compute the metric suite");
  add_common(ev);
  ev->add_option("--ckpt", o.ckpt, "diffusion or cfg checkpoint");
  ev->add_option("--quantizer", o.quantizer, "quantizer checkpoint (default: the one in --ckpt)");
  ev->add_option("--data", o.data, "dataset directory");
  ev->add_option("--s", o.s, "guidance scale");
  ev->add_option("--r", o.r, "truncation ratio");
  ev->add_option("--best-of", o.best_of, "candidates per prompt (default eval.best_of)");
  ev->add_option("--seed", o.seed, "sampling seed (default eval.seed)");
  ev->add_option("--metrics-out", o.metrics, "metrics CSV path");

  auto* ab = app.add_subcommand("ablate", "sweep guidance scale x truncation ratio");
  add_common(ab);
  ab->add_option("--ckpt", o.ckpt, "cfg checkpoint");
  ab->add_option("--quantizer", o.quantizer, "quantizer checkpoint (default: the one in --ckpt)");
  ab->add_option("--data", o.data, "dataset directory");
  ab->add_option("--grid-s", o.grid_s, "guidance scales")->delimiter(',');
  ab->add_option("--grid-r", o.grid_r, "truncation ratios")->delimiter(',');
  ab->add_option("--grid-alpha", o.grid_alpha, "pseudo-text noise scales (retrains per value)")
      ->delimiter(',');
  ab->add_option("--seed", o.seed, "sampling seed (default eval.seed)");
  ab->add_option("--out", o.out, "sweep CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return CmdGenData(o);
    if (*tq) return CmdTrainQuantizer(o);
    if (*td) return CmdTrainDiffusion(o);
    if (*fc) return CmdFinetuneCfg(o);
    if (*sm) return CmdSample(o);
    if (*ev) return CmdEval(o);
    if (*ab) return CmdAblate(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
