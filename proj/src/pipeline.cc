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

#include "clipvq/pipeline.h"

#include <cmath>
#include <sstream>

#include "clipvq/errors.h"

namespace clipvq {

DatasetConfig DatasetConfigFrom(const Config& cfg) {
  DatasetConfig dc;
  dc.concepts = static_cast<int>(cfg.GetInt("space.concepts"));
  dc.images_per_concept = static_cast<int>(cfg.GetInt("data.images_per_concept"));
  dc.image_side = static_cast<int>(cfg.GetInt("quantizer.image_side"));
  dc.patch = static_cast<int>(cfg.GetInt("quantizer.patch"));
  dc.alphabet = static_cast<int>(cfg.GetInt("data.alphabet"));
  dc.pixel_noise = cfg.GetDouble("data.pixel_noise");
  dc.seed = static_cast<uint64_t>(cfg.GetInt("data.seed"));
  return dc;
}

EmbeddingSpace SpaceFrom(const Config& cfg) {
  return MakeSpace(static_cast<int>(cfg.GetInt("space.dim")),
                   static_cast<int>(cfg.GetInt("space.concepts")), cfg.GetDouble("space.gap_angle"),
                   cfg.GetDouble("space.jitter"), static_cast<uint64_t>(cfg.GetInt("space.seed")));
}

NoiseSchedule ScheduleFrom(const Config& cfg) {
  return NoiseSchedule::Build(static_cast<int>(cfg.GetInt("schedule.steps")),
                              static_cast<int>(cfg.GetInt("quantizer.codebook_size")),
                              cfg.GetDouble("schedule.replace"));
}

QuantizerTrainConfig QuantizerTrainConfigFrom(const Config& cfg) {
  QuantizerTrainConfig tc;
  tc.steps = cfg.GetInt("quantizer.steps");
  tc.batch = static_cast<int>(cfg.GetInt("quantizer.batch"));
  tc.adam.learning_rate = cfg.GetDouble("quantizer.lr");
  tc.adam.beta1 = cfg.GetDouble("quantizer.beta1");
  tc.adam.beta2 = cfg.GetDouble("quantizer.beta2");
  tc.tau_start = cfg.GetDouble("quantizer.tau_start");
  tc.tau_end = cfg.GetDouble("quantizer.tau_end");
  tc.seed = static_cast<uint64_t>(cfg.GetInt("seed"));
  tc.log_every = cfg.GetInt("log.every");
  return tc;
}

DiffusionTrainConfig DiffusionTrainConfigFrom(const Config& cfg, const std::string& stage) {
  DiffusionTrainConfig tc;
  tc.alpha = cfg.GetDouble("diffusion.alpha");
  tc.aux_weight = cfg.GetDouble("diffusion.aux_weight");
  tc.adam.beta1 = cfg.GetDouble("diffusion.beta1");
  tc.adam.beta2 = cfg.GetDouble("diffusion.beta2");
  tc.seed = static_cast<uint64_t>(cfg.GetInt("seed"));
  tc.log_every = cfg.GetInt("log.every");
  tc.threads = static_cast<int>(cfg.GetInt("threads"));
  if (stage == "diffusion") {
    tc.steps = cfg.GetInt("diffusion.steps");
    tc.batch = static_cast<int>(cfg.GetInt("diffusion.batch"));
    tc.adam.learning_rate = cfg.GetDouble("diffusion.lr");
    tc.p_drop = 0.0;
  } else if (stage == "cfg") {
    tc.steps = cfg.GetInt("cfg.steps");
    tc.batch = static_cast<int>(cfg.GetInt("cfg.batch"));
    tc.adam.learning_rate = cfg.GetDouble("cfg.lr");
    tc.p_drop = cfg.GetDouble("cfg.p_drop");
    tc.step_offset = cfg.GetInt("diffusion.steps");
  } else {
    throw ArgumentError("unknown training stage '" + stage + "'");
  }
  return tc;
}

Dataset GenData(const Config& cfg) {
  return GenerateDataset(DatasetConfigFrom(cfg), SpaceFrom(cfg));
}

std::vector<DiffusionExample> EncodeDataset(const QuantizerParams& q, const Dataset& data) {
  std::vector<DiffusionExample> out;
  out.reserve(data.images.size());
  for (size_t i = 0; i < data.images.size(); ++i) {
    out.push_back({EncodeHard(q, data.images[i]), data.labels[i]});
  }
  return out;
}

DiffusionTrainResult RunDiffusionStage(const Config& cfg, const QuantizerParams& q,
                                       const Dataset& data) {
  const DiffusionTrainConfig tc = DiffusionTrainConfigFrom(cfg, "diffusion");
  Rng init_rng = Rng::Stream(tc.seed, 0xD1FF);
  DenoiserParams init = DenoiserParams::Init(DenoiserConfigFrom(cfg), init_rng);
  return TrainDenoiser(std::move(init), ScheduleFrom(cfg), tc, EncodeDataset(q, data), data.space);
}

DiffusionTrainResult RunCfgStage(const Config& cfg, DenoiserParams init, const QuantizerParams& q,
                                 const Dataset& data) {
  const DiffusionTrainConfig tc = DiffusionTrainConfigFrom(cfg, "cfg");
  if (!(tc.p_drop > 0.0 && tc.p_drop < 1.0)) {
    throw ArgumentError("cfg.p_drop must lie in (0, 1), got " + FormatDouble(tc.p_drop));
  }
  return TrainDenoiser(std::move(init), ScheduleFrom(cfg), tc, EncodeDataset(q, data), data.space);
}

std::vector<TokenGrid> SampleConcept(const DenoiserParams& denoiser, const NoiseSchedule& schedule,
                                     const EmbeddingSpace& space, int concept_id, int n,
                                     const GuidanceOptions& options, uint64_t seed) {
  if (concept_id < 0 || concept_id >= space.concepts) {
    throw ArgumentError("concept " + std::to_string(concept_id) + " outside [0, " +
                        std::to_string(space.concepts) + ")");
  }
  const Condition cond = Condition::Embedding(TextEmbed(space, concept_id).values());
  const Condition null = Condition::Null();
  const LogitsFn cond_fn = [&](const TokenGrid& xt, int t) {
    return Forward(denoiser, xt, t, cond);
  };
  const LogitsFn uncond_fn = [&](const TokenGrid& xt, int t) {
    return Forward(denoiser, xt, t, null);
  };
  std::vector<TokenGrid> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::Stream(seed, static_cast<uint64_t>(concept_id), static_cast<uint64_t>(i));
    out.push_back(Sample(cond_fn, uncond_fn, schedule, denoiser.config.seq_len, options, rng));
  }
  return out;
}

EvalOptions EvalOptionsFrom(const Config& cfg) {
  EvalOptions o;
  o.guidance.scale = cfg.GetDouble("sample.guide");
  o.guidance.truncation = cfg.GetDouble("sample.truncation");
  o.samples_per_concept = static_cast<int>(cfg.GetInt("eval.samples_per_concept"));
  o.best_of = static_cast<int>(cfg.GetInt("eval.best_of"));
  o.feature_dim = static_cast<int>(cfg.GetInt("eval.feature_dim"));
  o.seed = static_cast<uint64_t>(cfg.GetInt("eval.seed"));
  return o;
}

double EvalReport::Get(const std::string& split, const std::string& metric) const {
  for (const auto& r : rows) {
    if (r.split == split && r.metric == metric) return r.value;
  }
  throw ArgumentError("no metric " + split + "/" + metric);
}

std::string EvalCsv(const EvalReport& report) {
  std::string out = "split,metric,value,note\n";
  for (const auto& r : report.rows) {
    out += r.split + "," + r.metric + "," + FormatDouble(r.value) + "," + r.note + "\n";
  }
  return out;
}

namespace {

struct SplitImages {
  std::vector<std::vector<Vector>> per_concept;
};

// Appends the four metrics for one split. clip_matrix(c, c') holds the best
// of the first best_of images of concept c scored against text c'.
void ScoreSplit(const std::string& split, const SplitImages& images, const FeatureSet& reference,
                const FeatureProjector& projector, const ImageScorer& scorer, int best_of,
                EvalReport& report, Matrix* clip_matrix) {
  const int concepts = static_cast<int>(images.per_concept.size());
  std::vector<Vector> all;
  std::vector<int> labels;
  for (int c = 0; c < concepts; ++c) {
    for (const auto& img : images.per_concept[static_cast<size_t>(c)]) {
      all.push_back(img);
      labels.push_back(c);
    }
  }
  const FeatureSet features = FeatureSet::FromSamples(projector.Project(all));
  Matrix posteriors(static_cast<Eigen::Index>(all.size()), concepts);
  for (size_t i = 0; i < all.size(); ++i) {
    posteriors.row(static_cast<Eigen::Index>(i)) = scorer.Posterior(all[i]).transpose();
  }
  Matrix clip(concepts, concepts);
  double clip_true = 0.0;
  for (int c = 0; c < concepts; ++c) {
    const auto& group = images.per_concept[static_cast<size_t>(c)];
    const size_t n = std::min(group.size(), static_cast<size_t>(best_of));
    for (int text = 0; text < concepts; ++text) {
      const UnitEmbedding prompt = TextEmbed(scorer.space(), text);
      double best = -2.0;
      for (size_t i = 0; i < n; ++i) best = std::max(best, scorer.ClipScore(group[i], prompt));
      clip(c, text) = best;
    }
    clip_true += clip(c, c);
  }
  std::string note = features.rank_deficient || reference.rank_deficient
                         ? "rank_deficient_covariance"
                         : "";
  report.rows.push_back({split, "frechet", FrechetDistance(features, reference), note});
  report.rows.push_back({split, "is_surrogate", InceptionSurrogate(posteriors), ""});
  report.rows.push_back({split, "clip_surrogate", clip_true / concepts,
                         "best_of_" + std::to_string(best_of)});
  report.rows.push_back({split, "concept_acc", ConceptAccuracy(all, labels, scorer), ""});
  if (clip_matrix != nullptr) *clip_matrix = clip;
}

}  // namespace

EvalReport Evaluate(const DenoiserParams& denoiser, const QuantizerParams& q,
                    const NoiseSchedule& schedule, const Dataset& data,
                    const EvalOptions& options) {
  if (options.samples_per_concept < 1 || options.best_of < 1) {
    throw ArgumentError("evaluation needs at least one sample and one candidate");
  }
  const int concepts = data.concepts();
  const ImageScorer scorer(data.patterns, data.space);
  const FeatureProjector projector(static_cast<int>(data.patterns.cols()), options.feature_dim,
                                   options.seed);

  SplitImages reference;
  reference.per_concept.resize(static_cast<size_t>(concepts));
  for (size_t i = 0; i < data.images.size(); ++i) {
    auto& group = reference.per_concept[static_cast<size_t>(data.labels[i])];
    if (static_cast<int>(group.size()) < options.samples_per_concept) group.push_back(data.images[i]);
  }
  std::vector<Vector> reference_all;
  for (const auto& g : reference.per_concept) reference_all.insert(reference_all.end(), g.begin(), g.end());
  const FeatureSet reference_features = FeatureSet::FromSamples(projector.Project(reference_all));

  SplitImages generated;
  for (int c = 0; c < concepts; ++c) {
    std::vector<Vector> decoded;
    for (const auto& grid : SampleConcept(denoiser, schedule, data.space, c,
                                          options.samples_per_concept, options.guidance,
                                          options.seed)) {
      decoded.push_back(Decode(q, grid));
    }
    generated.per_concept.push_back(std::move(decoded));
  }

  EvalReport report;
  ScoreSplit("generated", generated, reference_features, projector, scorer, options.best_of,
             report, &report.clip_matrix);
  ScoreSplit("reference", reference, reference_features, projector, scorer, options.best_of,
             report, nullptr);
  for (int c = 0; c < concepts; ++c) {
    bool best = true;
    for (int other = 0; other < concepts; ++other) {
      if (other != c && !(report.clip_matrix(c, c) > report.clip_matrix(c, other))) best = false;
    }
    report.concepts_true_best += best;
  }
  return report;
}

std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::string out = "s,r,alpha,clip_surrogate,frechet,is_surrogate,concept_acc\n";
  for (const auto& r : rows) {
    out += FormatDouble(r.s) + "," + FormatDouble(r.r) + "," + FormatDouble(r.alpha) + "," +
           FormatDouble(r.clip_surrogate) + "," + FormatDouble(r.frechet) + "," +
           FormatDouble(r.is_surrogate) + "," + FormatDouble(r.concept_acc) + "\n";
  }
  return out;
}

std::vector<SweepRow> ParseSweepCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "s,r,alpha,clip_surrogate,frechet,is_surrogate,concept_acc") {
    throw FormatError("sweep CSV: unexpected header");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<double> v;
    for (std::string cell; std::getline(fields, cell, ',');) {
      try {
        size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw FormatError("");
      } catch (const std::exception&) {
        throw FormatError("sweep CSV: bad number '" + cell + "'");
      }
    }
    if (v.size() != 7) throw FormatError("sweep CSV: expected 7 fields in '" + line + "'");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  return rows;
}

std::vector<SweepRow> SweepGrid(const DenoiserParams& denoiser, const QuantizerParams& q,
                                const NoiseSchedule& schedule, const Dataset& data,
                                const EvalOptions& base, const std::vector<double>& grid_s,
                                const std::vector<double>& grid_r, double alpha) {
  if (grid_s.empty() || grid_r.empty()) throw ArgumentError("sweep grid is empty");
  std::vector<SweepRow> rows;
  for (double s : grid_s) {
    for (double r : grid_r) {
      EvalOptions o = base;
      o.guidance = {s, r};
      const EvalReport report = Evaluate(denoiser, q, schedule, data, o);
      rows.push_back({s, r, alpha, report.Get("generated", "clip_surrogate"),
                      report.Get("generated", "frechet"), report.Get("generated", "is_surrogate"),
                      report.Get("generated", "concept_acc")});
    }
  }
  return rows;
}

}  // namespace clipvq
