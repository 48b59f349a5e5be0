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

#include "clipvq/dataset.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "clipvq/config.h"
#include "clipvq/errors.h"
#include "clipvq/params.h"
#include "clipvq/quantizer.h"
#include "clipvq/tensor_file.h"

namespace clipvq {
namespace {

double RoundToFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

// Distinct concepts must differ in at least a quarter of their patch slots.
bool FarEnough(const std::vector<std::vector<int>>& layouts,
               const std::vector<int>& candidate) {
  for (const auto& other : layouts) {
    size_t diff = 0;
    for (size_t i = 0; i < candidate.size(); ++i) diff += other[i] != candidate[i];
    if (diff * 4 < candidate.size()) return false;
  }
  return true;
}

}  // namespace

Matrix MakePatterns(const DatasetConfig& c) {
  if (c.image_side % c.patch != 0) throw ArgumentError("dataset: side not divisible by patch");
  if (c.concepts < 1 || c.alphabet < 2) throw ArgumentError("dataset: need concepts and an alphabet");
  Rng rng(c.seed);
  const int pp = c.patch * c.patch;
  Matrix prototypes(c.alphabet, pp);
  for (Eigen::Index i = 0; i < prototypes.size(); ++i) {
    prototypes.data()[i] = rng.Uniform();
  }
  const int grid = c.image_side / c.patch;
  const int slots = grid * grid;
  std::vector<std::vector<int>> layouts;
  Matrix patterns(c.concepts, c.image_side * c.image_side);
  for (int concept_id = 0; concept_id < c.concepts; ++concept_id) {
    std::vector<int> layout(static_cast<size_t>(slots));
    for (int attempt = 0;; ++attempt) {
      for (int& s : layout) s = rng.UniformInt(c.alphabet);
      if (FarEnough(layouts, layout) || attempt > 1000) break;
    }
    layouts.push_back(layout);
    Matrix patches(slots, pp);
    for (int s = 0; s < slots; ++s) patches.row(s) = prototypes.row(layout[static_cast<size_t>(s)]);
    const Vector img = AssemblePatches(patches, c.image_side, c.patch);
    patterns.row(concept_id) = img.unaryExpr(&RoundToFloat).transpose();
  }
  return patterns;
}

Dataset GenerateDataset(const DatasetConfig& c, EmbeddingSpace space) {
  if (space.concepts != c.concepts) {
    throw ArgumentError("dataset: embedding space has " + std::to_string(space.concepts) +
                        " concepts, config has " + std::to_string(c.concepts));
  }
  Dataset data;
  data.image_side = c.image_side;
  data.patterns = MakePatterns(c);
  data.space = std::move(space);
  Rng rng = Rng::Stream(c.seed, 1);
  for (int concept_id = 0; concept_id < c.concepts; ++concept_id) {
    for (int i = 0; i < c.images_per_concept; ++i) {
      Vector img = data.patterns.row(concept_id).transpose();
      for (Eigen::Index k = 0; k < img.size(); ++k) {
        img[k] = RoundToFloat(img[k] + c.pixel_noise * rng.Normal());
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(concept_id);
    }
  }
  return data;
}

std::string ImageToF32Bytes(const Vector& image) {
  std::string bytes(static_cast<size_t>(image.size()) * sizeof(float), '\0');
  for (Eigen::Index k = 0; k < image.size(); ++k) {
    const float v = static_cast<float>(image[k]);
    std::memcpy(bytes.data() + k * sizeof(float), &v, sizeof(float));
  }
  return bytes;
}

void SaveDataset(const Dataset& data, const std::filesystem::path& dir,
                 const std::string& echo) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

  std::ostringstream manifest;
  std::istringstream echo_lines(echo);
  for (std::string line; std::getline(echo_lines, line);) manifest << "# " << line << "\n";
  manifest << "file\tconcept\n";
  for (int i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06d.f32", i);
    WriteFileAtomic(dir / name, ImageToF32Bytes(data.images[static_cast<size_t>(i)]));
    manifest << name << "\t" << data.labels[static_cast<size_t>(i)] << "\n";
  }
  WriteFileAtomic(dir / "manifest.tsv", manifest.str());

  TensorFile space;
  space.Add(ToNamedTensor("concept_dirs", data.space.concept_dirs));
  space.Add(ToNamedTensor("text_dirs", data.space.text_dirs));
  space.Add(ToNamedTensor("patterns", data.patterns));
  space.echo = echo;
  SaveTensorFile(space, dir / "space.bin");
}

Dataset LoadDataset(const std::filesystem::path& dir) {
  const TensorFile space = LoadTensorFile(dir / "space.bin");
  const Config cfg = Config::Parse(space.echo);
  Dataset data;
  const auto& cd = space.Get("concept_dirs");
  const auto& pt = space.Get("patterns");
  if (cd.dims.size() != 2 || pt.dims.size() != 2 || pt.dims[0] != cd.dims[0]) {
    throw FormatError("space.bin: inconsistent tensor shapes");
  }
  data.space.concepts = static_cast<int>(cd.dims[0]);
  data.space.dim = static_cast<int>(cd.dims[1]);
  data.space.gap_angle = cfg.GetDouble("space.gap_angle");
  data.space.jitter = cfg.GetDouble("space.jitter");
  data.space.concept_dirs.resize(cd.dims[0], cd.dims[1]);
  data.space.text_dirs.resize(cd.dims[0], cd.dims[1]);
  FromNamedTensor(cd, data.space.concept_dirs);
  FromNamedTensor(space.Get("text_dirs"), data.space.text_dirs);
  // Stored at float precision; restore unit norm.
  data.space.concept_dirs.rowwise().normalize();
  data.space.text_dirs.rowwise().normalize();
  data.patterns.resize(pt.dims[0], pt.dims[1]);
  FromNamedTensor(pt, data.patterns);
  data.image_side = static_cast<int>(cfg.GetInt("quantizer.image_side"));
  if (static_cast<int64_t>(data.image_side) * data.image_side != pt.dims[1]) {
    throw FormatError("space.bin: pattern width does not match image side");
  }

  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.tsv").string());
  std::string line;
  bool header_seen = false;
  const size_t pixels = pt.dims[1];
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "file\tconcept") throw FormatError("manifest.tsv: bad header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("manifest.tsv: bad row '" + line + "'");
    const std::string bytes = ReadFileBytes(dir / line.substr(0, tab));
    if (bytes.size() != pixels * sizeof(float)) {
      throw FormatError("image " + line.substr(0, tab) + " has " +
                        std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(pixels * sizeof(float)));
    }
    Vector img(static_cast<Eigen::Index>(pixels));
    for (size_t k = 0; k < pixels; ++k) {
      float v;
      std::memcpy(&v, bytes.data() + k * sizeof(float), sizeof(float));
      img[static_cast<Eigen::Index>(k)] = v;
    }
    const int label = std::stoi(line.substr(tab + 1));
    if (label < 0 || label >= data.space.concepts) {
      throw FormatError("manifest.tsv: concept " + std::to_string(label) + " out of range");
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  if (!header_seen) throw FormatError("manifest.tsv: missing header");
  return data;
}

}  // namespace clipvq
