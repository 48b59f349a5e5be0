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

// Drives the clipvq binary end to end on a tiny configuration.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "clipvq/pipeline.h"
#include "clipvq/tensor_file.h"

namespace clipvq {
namespace {

namespace fs = std::filesystem;

const fs::path& Dir() {
  static const fs::path dir = fs::temp_directory_path() / ("clipvq_cli_test_" + std::to_string(getpid()));
  return dir;
}

int Clipvq(const std::string& args) {
  const std::string cmd = std::string(CLIPVQ_BIN) + " " + args + " >>" +
                          (Dir() / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string P(const std::string& name) { return (Dir() / name).string(); }

std::vector<std::string> Lines(const std::string& path) {
  std::istringstream in(ReadFileBytes(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string Cfg() { return "--config " + P("tiny.cfg"); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(Dir());
    fs::create_directories(Dir());
    std::ofstream(P("tiny.cfg")) << "# tiny end-to-end run\n"
                                    "data.images_per_concept = 16\n"
                                    "quantizer.steps = 50\n"
                                    "schedule.steps = 10\n"
                                    "denoiser.d_model = 16\n"
                                    "denoiser.heads = 2\n"
                                    "denoiser.blocks = 1\n"
                                    "denoiser.cond_hidden = 16\n"
                                    "diffusion.steps = 20\n"
                                    "cfg.steps = 10\n"
                                    "eval.samples_per_concept = 4\n"
                                    "eval.best_of = 2\n"
                                    "log.every = 10\n";
    pipeline_status_ = {
        Clipvq("gen-data " + Cfg() + " --out " + P("data")),
        Clipvq("train-quantizer " + Cfg() + " --data " + P("data") + " --out " + P("q.ckpt")),
        Clipvq("train-diffusion " + Cfg() + " --data " + P("data") + " --ckpt " + P("q.ckpt") +
            " --out " + P("d.ckpt")),
        Clipvq("finetune-cfg " + Cfg() + " --data " + P("data") + " --ckpt " + P("d.ckpt") +
            " --out " + P("c.ckpt")),
    };
  }

  static void TearDownTestSuite() { fs::remove_all(Dir()); }

  static std::vector<int> pipeline_status_;
};

std::vector<int> Cli::pipeline_status_;

TEST_F(Cli, PipelineWritesCheckpointsAndMetrics) {
  EXPECT_EQ(pipeline_status_, (std::vector<int>{0, 0, 0, 0}));
  for (const char* name : {"q.ckpt", "d.ckpt", "c.ckpt"}) {
    EXPECT_TRUE(fs::exists(P(name))) << name;
    const auto lines = Lines(P(std::string(name) + ".metrics.csv"));
    ASSERT_FALSE(lines.empty());
    EXPECT_EQ(lines[0], "step,metric,value");
    EXPECT_GT(lines.size(), 1u);
  }
  EXPECT_TRUE(fs::exists(P("data/manifest.tsv")));
  EXPECT_TRUE(fs::exists(P("data/space.bin")));
  // The checkpoint echoes the effective configuration.
  const TensorFile tf = LoadTensorFile(P("c.ckpt"));
  EXPECT_NE(tf.echo.find("diffusion.steps = 20"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(Clipvq("train-diffusion " + Cfg() + " --data " + P("data") + " --out " + P("x.ckpt")), 1);
  EXPECT_EQ(Clipvq("finetune-cfg " + Cfg() + " --data " + P("data") + " --ckpt " + P("missing.ckpt") +
                " --out " + P("x.ckpt")),
            1);
  EXPECT_EQ(Clipvq("sample --ckpt " + P("c.ckpt") + " --concept 8 --n 1 --out " + P("bad")), 1);
  EXPECT_EQ(Clipvq("sample --ckpt " + P("c.ckpt") + " --concept -1 --n 1 --out " + P("bad")), 1);
  EXPECT_EQ(Clipvq("gen-data --set no.such.key=1 --out " + P("bad")), 1);
  EXPECT_EQ(Clipvq("gen-data --set seed=abc --out " + P("bad")), 1);
  EXPECT_EQ(Clipvq("no-such-command"), 1);
  EXPECT_EQ(Clipvq(""), 1);
  EXPECT_EQ(Clipvq("ablate --ckpt " + P("c.ckpt") + " --data " + P("data") + " --grid-r 0.9 --out " +
                P("bad.csv")),
            1);
  EXPECT_FALSE(fs::exists(P("x.ckpt")));
}

TEST_F(Cli, CorruptCheckpointExitsThree) {
  std::string bytes = ReadFileBytes(P("c.ckpt"));
  WriteFileAtomic(P("truncated.ckpt"), bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(Clipvq("sample --ckpt " + P("truncated.ckpt") + " --concept 0 --n 1 --out " + P("bad")), 3);
  bytes[0] = 'X';
  WriteFileAtomic(P("magic.ckpt"), bytes);
  EXPECT_EQ(Clipvq("eval --ckpt " + P("magic.ckpt") + " --data " + P("data") + " --metrics-out " +
                P("bad.csv")),
            3);
}

TEST_F(Cli, SampleIsDeterministic) {
  const std::string base = "sample --ckpt " + P("c.ckpt") + " --data " + P("data") +
                           " --concept 3 --n 3 --seed 5 --best-of 2 --out ";
  ASSERT_EQ(Clipvq(base + P("s1")), 0);
  ASSERT_EQ(Clipvq(base + P("s2")), 0);
  EXPECT_EQ(ReadFileBytes(P("s1/samples.tsv")), ReadFileBytes(P("s2/samples.tsv")));
  for (int i = 0; i < 3; ++i) {
    const std::string img = "images/00000" + std::to_string(i) + ".f32";
    EXPECT_EQ(ReadFileBytes(P("s1/" + img)), ReadFileBytes(P("s2/" + img)));
    EXPECT_EQ(fs::file_size(P("s1/" + img)), 256u * 4u);
  }
  const auto lines = Lines(P("s1/samples.tsv"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "file\tconcept\tscore\ttokens");
  EXPECT_EQ(lines[1].rfind("images/000000.f32\t3\t", 0), 0u);

  // Unguided sampling needs no dataset.
  ASSERT_EQ(Clipvq("sample --ckpt " + P("c.ckpt") + " --concept 0 --n 2 --s 1 --r 1 --out " + P("s3")), 0);
  EXPECT_EQ(Lines(P("s3/samples.tsv")).size(), 3u);
}

TEST_F(Cli, EvalWritesEightRows) {
  ASSERT_EQ(Clipvq("eval --ckpt " + P("c.ckpt") + " --data " + P("data") + " --metrics-out " +
                P("eval.csv")),
            0);
  const auto lines = Lines(P("eval.csv"));
  ASSERT_EQ(lines.size(), 9u);
  EXPECT_EQ(lines[0], "split,metric,value,note");
  int generated = 0, reference = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    generated += lines[i].rfind("generated,", 0) == 0;
    reference += lines[i].rfind("reference,", 0) == 0;
  }
  EXPECT_EQ(generated, 4);
  EXPECT_EQ(reference, 4);
}

TEST_F(Cli, AblateGridIsOrderedAndReproducible) {
  const std::string args = "ablate --ckpt " + P("c.ckpt") + " --data " + P("data") +
                           " --grid-s 1,1.1,1.2,1.3,1.5,2,3,5 --grid-r 0.75,0.8,0.85,0.9 --out ";
  ASSERT_EQ(Clipvq(args + P("ab1.csv")), 0);
  ASSERT_EQ(Clipvq("--threads 1 " + args + P("ab2.csv")), 0);
  EXPECT_EQ(ReadFileBytes(P("ab1.csv")), ReadFileBytes(P("ab2.csv")));
  const std::vector<SweepRow> rows = ParseSweepCsv(ReadFileBytes(P("ab1.csv")));
  ASSERT_EQ(rows.size(), 32u);
  const std::vector<double> s = {1, 1.1, 1.2, 1.3, 1.5, 2, 3, 5}, r = {0.75, 0.8, 0.85, 0.9};
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].s, s[i / 4]);
    EXPECT_EQ(rows[i].r, r[i % 4]);
    EXPECT_EQ(rows[i].alpha, 0.25);
  }
}

TEST_F(Cli, AblateAlphaSweepTagsRows) {
  ASSERT_EQ(Clipvq("ablate --ckpt " + P("c.ckpt") + " --data " + P("data") +
                " --grid-s 1,3 --grid-r 0.9 --grid-alpha 0,0.5 --out " + P("alpha.csv")),
            0);
  const std::vector<SweepRow> rows = ParseSweepCsv(ReadFileBytes(P("alpha.csv")));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].alpha, 0.0);
  EXPECT_EQ(rows[1].alpha, 0.0);
  EXPECT_EQ(rows[2].alpha, 0.5);
  EXPECT_EQ(rows[3].alpha, 0.5);
  EXPECT_EQ(rows[0].s, 1.0);
  EXPECT_EQ(rows[1].s, 3.0);
}

}  // namespace
}  // namespace clipvq
