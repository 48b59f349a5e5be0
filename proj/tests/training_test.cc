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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "clipvq/errors.h"
#include "clipvq/params.h"
#include "clipvq/pipeline.h"
#include "clipvq/tensor_file.h"
#include "clipvq/training.h"

namespace fs = std::filesystem;

namespace clipvq {
namespace {

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("clipvq_training_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TensorFile SampleFile() {
  TensorFile f;
  f.Add({"a", {2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, -6.5f}});
  f.Add({"b.bias", {4}, {0.f, 1e-30f, -0.f, 3.25f}});
  f.Add({"scalar", {}, {7.f}});
  f.echo = "seed = 1\n#@stage=test\n";
  return f;
}

TEST(TensorFile, RoundTripIsByteIdentical) {
  const std::string bytes = SerializeTensorFile(SampleFile());
  EXPECT_EQ(bytes.substr(0, 4), "CVQD");
  const TensorFile parsed = ParseTensorFile(bytes);
  ASSERT_EQ(parsed.tensors.size(), 3u);
  EXPECT_EQ(parsed.Get("a").dims, (std::vector<uint32_t>{2, 3}));
  EXPECT_EQ(parsed.Get("a").values[5], -6.5f);
  EXPECT_EQ(parsed.echo, "seed = 1\n#@stage=test\n");
  EXPECT_EQ(SerializeTensorFile(parsed), bytes);
}

TEST(TensorFile, LayoutIsLittleEndian) {
  TensorFile f;
  f.Add({"x", {1}, {1.0f}});
  const std::string bytes = SerializeTensorFile(f);
  // magic, version, count, name length, name, rank, dim, value, echo length
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 1 + 1 + 4 + 4 + 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1);
  EXPECT_EQ(bytes[14], 'x');
  float v;
  std::memcpy(&v, bytes.data() + 20, 4);
  EXPECT_EQ(v, 1.0f);
}

TEST(TensorFile, RejectsCorruption) {
  const std::string bytes = SerializeTensorFile(SampleFile());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    ParseTensorFile(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 'CVQD'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("XVQD"), std::string::npos);
  }
  std::string bad_version = bytes;
  bad_version[4] = 2;
  try {
    ParseTensorFile(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("found 2"), std::string::npos);
  }
  for (size_t cut = 0; cut < bytes.size(); ++cut) {
    EXPECT_THROW(ParseTensorFile(bytes.substr(0, cut)), FormatError) << "cut at " << cut;
  }
  EXPECT_THROW(ParseTensorFile(bytes + "x"), FormatError);
}

TEST(TensorFile, SaveLoadSaveAndAtomicWrite) {
  const fs::path dir = TempDir("atomic");
  SaveTensorFile(SampleFile(), dir / "a.bin");
  SaveTensorFile(LoadTensorFile(dir / "a.bin"), dir / "b.bin");
  EXPECT_EQ(ReadFileBytes(dir / "a.bin"), ReadFileBytes(dir / "b.bin"));
  EXPECT_FALSE(fs::exists(dir / "a.bin.tmp"));
  EXPECT_THROW(LoadTensorFile(dir / "missing.bin"), IoError);
}

TEST(Checkpoint, MetadataRoundTripsAndEchoParses) {
  QuantizerConfig qc;
  Rng rng(1);
  const QuantizerParams q = QuantizerParams::Init(qc, rng);
  const Config cfg;
  const Checkpoint ckpt = MakeQuantizerCheckpoint(q, cfg.ToText(), 3000, 1234);
  const fs::path dir = TempDir("ckpt");
  SaveCheckpoint(ckpt, dir / "q.ckpt");
  const Checkpoint back = LoadCheckpoint(dir / "q.ckpt");
  EXPECT_EQ(back.Meta("stage"), "quantizer");
  EXPECT_EQ(back.Meta("step"), "3000");
  EXPECT_EQ(back.Meta("rng_seed"), "1234");
  EXPECT_EQ(back.config_text, cfg.ToText());
  EXPECT_EQ(Config::Parse(ToTensorFile(back).echo).ToText(), cfg.ToText());
  EXPECT_THROW(back.Meta("nope"), FormatError);

  const QuantizerParams restored = QuantizerFromCheckpoint(back);
  // Values are stored as float32.
  EXPECT_LE((restored.codebook - q.codebook).cwiseAbs().maxCoeff(), 1e-6);
  SaveCheckpoint(back, dir / "q2.ckpt");
  EXPECT_EQ(ReadFileBytes(dir / "q.ckpt"), ReadFileBytes(dir / "q2.ckpt"));
}

TEST(Checkpoint, DenoiserCarriesQuantizer) {
  Config cfg;
  cfg.Set("denoiser.d_model", "16");
  cfg.Set("denoiser.blocks", "1");
  Rng rng(2);
  const DenoiserParams d = DenoiserParams::Init(DenoiserConfigFrom(cfg), rng);
  const QuantizerParams q = QuantizerParams::Init(QuantizerConfigFrom(cfg), rng);
  const Checkpoint ckpt = MakeDenoiserCheckpoint(d, cfg.ToText(), "cfg", 5000, 7, &q);
  const Checkpoint back = FromTensorFile(ParseTensorFile(SerializeTensorFile(ToTensorFile(ckpt))));
  EXPECT_EQ(back.Meta("stage"), "cfg");
  EXPECT_LE((DenoiserFromCheckpoint(back).head_w - d.head_w).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((QuantizerFromCheckpoint(back).enc_w - q.enc_w).cwiseAbs().maxCoeff(), 1e-6);
}

std::vector<Vector> ToyImages(int per_concept) {
  Config cfg;
  cfg.Set("data.images_per_concept", std::to_string(per_concept));
  return GenData(cfg).images;
}

TEST(TrainQuantizer, LossFallsOnToySet) {
  QuantizerTrainConfig tc;
  tc.steps = 400;
  const QuantizerTrainResult r = TrainQuantizer(QuantizerConfig{}, tc, ToyImages(32));
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 40; ++i) {
    first += r.loss_trace[static_cast<size_t>(i)];
    last += r.loss_trace[r.loss_trace.size() - 1 - static_cast<size_t>(i)];
  }
  EXPECT_LT(last, first);
  EXPECT_LT(r.hard_mse, 0.1);
  bool saw_header_metric = false;
  for (const auto& m : r.metrics) saw_header_metric |= m.metric == "quantizer/hard_mse";
  EXPECT_TRUE(saw_header_metric);
  EXPECT_EQ(MetricsCsv(r.metrics).rfind("step,metric,value\n", 0), 0u);
}

TEST(TrainQuantizer, MemorisesSingleImage) {
  // One concept without pixel noise: at most `alphabet` distinct patches,
  // which the 8-wide affine decoder can reproduce exactly.
  Config cfg;
  cfg.Set("space.concepts", "1");
  cfg.Set("data.images_per_concept", "64");
  cfg.Set("data.pixel_noise", "0");
  const std::vector<Vector> images = GenData(cfg).images;
  ASSERT_EQ(images.front(), images.back());
  const QuantizerTrainConfig tc;  // default 3000 steps
  EXPECT_LT(TrainQuantizer(QuantizerConfig{}, tc, images).hard_mse, 1e-3);
}

TEST(TrainQuantizer, FixedSeedGivesIdenticalCheckpoint) {
  QuantizerTrainConfig tc;
  tc.steps = 50;
  const auto images = ToyImages(8);
  const QuantizerTrainResult a = TrainQuantizer(QuantizerConfig{}, tc, images);
  const QuantizerTrainResult b = TrainQuantizer(QuantizerConfig{}, tc, images);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(SerializeTensorFile(ToTensorFile(MakeQuantizerCheckpoint(a.params, "", 50, 1))),
            SerializeTensorFile(ToTensorFile(MakeQuantizerCheckpoint(b.params, "", 50, 1))));
}

TEST(TrainQuantizer, DivergenceIsReported) {
  auto images = ToyImages(1);
  images[0][3] = std::numeric_limits<double>::quiet_NaN();
  QuantizerTrainConfig tc;
  tc.steps = 5;
  EXPECT_THROW(TrainQuantizer(QuantizerConfig{}, tc, images), TrainingError);
  EXPECT_THROW(TrainQuantizer(QuantizerConfig{}, tc, {}), ArgumentError);
}

// A small denoiser on a small dataset keeps these runs to seconds.
struct SmallSetup {
  Config cfg;
  Dataset data;
  QuantizerParams q;
  std::vector<DiffusionExample> examples;
  NoiseSchedule schedule;

  SmallSetup() : schedule(NoiseSchedule::Build(1, 2)) {
    cfg.Set("data.images_per_concept", "32");
    cfg.Set("schedule.steps", "20");
    cfg.Set("denoiser.d_model", "32");
    cfg.Set("denoiser.cond_hidden", "32");
    cfg.Set("denoiser.blocks", "1");
    cfg.Set("quantizer.steps", "300");
    data = GenData(cfg);
    q = TrainQuantizer(QuantizerConfigFrom(cfg), QuantizerTrainConfigFrom(cfg), data.images).params;
    examples = EncodeDataset(q, data);
    schedule = ScheduleFrom(cfg);
  }

  DenoiserParams Init() const {
    Rng rng(5);
    return DenoiserParams::Init(DenoiserConfigFrom(cfg), rng);
  }
};

const SmallSetup& SharedSetup() {
  static const SmallSetup setup;
  return setup;
}

DiffusionTrainConfig ShortRun(int64_t steps, double p_drop) {
  DiffusionTrainConfig tc;
  tc.steps = steps;
  tc.batch = 8;
  tc.p_drop = p_drop;
  tc.log_every = 10;
  return tc;
}

TEST(TrainDenoiser, VlbTermFallsByThirty) {
  const SmallSetup& s = SharedSetup();
  const DiffusionTrainResult r = TrainDenoiser(s.Init(), s.schedule, ShortRun(300, 0.0), s.examples, s.data.space);
  const size_t n = r.vlb_trace.size(), w = n / 10;
  double first = 0.0, last = 0.0;
  for (size_t i = 0; i < w; ++i) {
    first += r.vlb_trace[i];
    last += r.vlb_trace[n - 1 - i];
  }
  EXPECT_LE(last, 0.7 * first);
}

TEST(TrainDenoiser, AlphaOnlyChangesConditioning) {
  const SmallSetup& s = SharedSetup();
  DiffusionTrainConfig a = ShortRun(5, 0.0), b = ShortRun(5, 0.0);
  a.alpha = 0.0;
  b.alpha = 0.25;
  const DiffusionTrainResult ra = TrainDenoiser(s.Init(), s.schedule, a, s.examples, s.data.space);
  const DiffusionTrainResult rb = TrainDenoiser(s.Init(), s.schedule, b, s.examples, s.data.space);
  EXPECT_EQ(Flatten(ra.params).size(), Flatten(rb.params).size());
  EXPECT_EQ(ra.vlb_trace.size(), rb.vlb_trace.size());
  EXPECT_NE(Flatten(ra.params), Flatten(rb.params));
}

TEST(TrainDenoiser, NoDropoutMeansNoNullGradient) {
  const SmallSetup& s = SharedSetup();
  for (double alpha : {0.0, 0.25}) {
    DiffusionTrainConfig tc = ShortRun(30, 0.0);
    tc.alpha = alpha;
    const DenoiserParams init = s.Init();
    const DiffusionTrainResult r = TrainDenoiser(init, s.schedule, tc, s.examples, s.data.space);
    EXPECT_EQ(r.max_null_grad, 0.0);
    EXPECT_EQ(r.dropped, 0);
    EXPECT_EQ(r.params.null_cond, init.null_cond);
  }
}

TEST(TrainDenoiser, DropoutMovesNullCondition) {
  const SmallSetup& s = SharedSetup();
  const DenoiserParams init = s.Init();
  const DiffusionTrainResult r = TrainDenoiser(init, s.schedule, ShortRun(30, 0.1), s.examples, s.data.space);
  EXPECT_GT(r.max_null_grad, 0.0);
  EXPECT_GT((r.params.null_cond - init.null_cond).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TrainDenoiser, DropFractionWithinBinomialBound) {
  const SmallSetup& s = SharedSetup();
  DiffusionTrainConfig tc = ShortRun(250, 0.3);
  tc.batch = 16;
  const DiffusionTrainResult r = TrainDenoiser(s.Init(), s.schedule, tc, s.examples, s.data.space);
  const double n = static_cast<double>(r.examples), q = 0.3;
  EXPECT_EQ(r.examples, 4000);
  EXPECT_NEAR(r.dropped / n, q, 4.0 * std::sqrt(q * (1 - q) / n));
}

TEST(TrainDenoiser, AlwaysDroppingMakesGuidanceInert) {
  const SmallSetup& s = SharedSetup();
  // Start from a model whose conditional path was never trained.
  const DiffusionTrainResult r = TrainDenoiser(s.Init(), s.schedule, ShortRun(200, 1.0), s.examples, s.data.space);
  EXPECT_EQ(r.dropped, r.examples);
  Rng rng(3);
  double gap = 0.0, scale = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int t = 1 + rng.UniformInt(20);
    const TokenGrid xt = ForwardSample(s.schedule, s.examples[static_cast<size_t>(i)].x0, t, rng);
    const Matrix c = Forward(r.params, xt, t, Condition::Embedding(TextEmbed(s.data.space, i % 8).values()));
    const Matrix u = Forward(r.params, xt, t, Condition::Null());
    for (Eigen::Index row = 0; row < c.rows(); ++row) {
      gap += (LogSoftmax(c.row(row).transpose()) - LogSoftmax(u.row(row).transpose())).cwiseAbs().mean();
      scale += (LogSoftmax(u.row(row).transpose()).array() - LogSoftmax(u.row(row).transpose()).mean()).abs().mean();
    }
  }
  EXPECT_LT(gap, 0.2 * scale);
}

TEST(TrainDenoiser, DeterministicAcrossRunsAndThreads) {
  const SmallSetup& s = SharedSetup();
  DiffusionTrainConfig tc = ShortRun(15, 0.1);
  const DiffusionTrainResult a = TrainDenoiser(s.Init(), s.schedule, tc, s.examples, s.data.space);
  const DiffusionTrainResult b = TrainDenoiser(s.Init(), s.schedule, tc, s.examples, s.data.space);
  tc.threads = 3;
  const DiffusionTrainResult c = TrainDenoiser(s.Init(), s.schedule, tc, s.examples, s.data.space);
  EXPECT_EQ(a.vlb_trace, b.vlb_trace);
  EXPECT_EQ(Flatten(a.params), Flatten(b.params));
  EXPECT_EQ(a.vlb_trace, c.vlb_trace);
  EXPECT_EQ(Flatten(a.params), Flatten(c.params));
}

TEST(TrainDenoiser, NonFiniteLossIsReported) {
  const SmallSetup& s = SharedSetup();
  DenoiserParams init = s.Init();
  init.head_b[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(TrainDenoiser(init, s.schedule, ShortRun(2, 0.0), s.examples, s.data.space), TrainingError);
  EXPECT_THROW(TrainDenoiser(s.Init(), s.schedule, ShortRun(2, 1.5), s.examples, s.data.space), ArgumentError);
}

TEST(Pipeline, TextConditionedSamplesBeatChance) {
  Config cfg;
  cfg.Set("data.images_per_concept", "128");
  cfg.Set("quantizer.steps", "1000");
  cfg.Set("diffusion.steps", "300");
  cfg.Set("cfg.steps", "100");
  const Dataset data = GenData(cfg);
  const QuantizerTrainResult q =
      TrainQuantizer(QuantizerConfigFrom(cfg), QuantizerTrainConfigFrom(cfg), data.images);
  DiffusionTrainResult d = RunDiffusionStage(cfg, q.params, data);
  d = RunCfgStage(cfg, std::move(d.params), q.params, data);
  EvalOptions o = EvalOptionsFrom(cfg);
  o.samples_per_concept = 8;
  o.best_of = 8;
  const EvalReport report = Evaluate(d.params, q.params, ScheduleFrom(cfg), data, o);
  EXPECT_GT(report.Get("generated", "concept_acc"), 0.25);
}

}  // namespace
}  // namespace clipvq
