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

#ifndef CLIPVQ_DATASET_H_
#define CLIPVQ_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clipvq/embedding.h"
#include "clipvq/numerics.h"

namespace clipvq {

struct DatasetConfig {
  int concepts = 8;
  int images_per_concept = 512;
  int image_side = 16;
  int patch = 4;
  int alphabet = 8;  // prototype patches shared by all concept patterns
  double pixel_noise = 0.05;
  uint64_t seed = 7;
};

// Synthetic concept-labelled images. Every concept owns a fixed pattern
// tiled from a small shared alphabet of random prototype patches; samples
// add Gaussian pixel noise. Pixel values are stored at float precision.
struct Dataset {
  int image_side = 0;
  Matrix patterns;  // C x side^2
  std::vector<Vector> images;
  std::vector<int> labels;
  EmbeddingSpace space;

  int concepts() const { return static_cast<int>(patterns.rows()); }
  int size() const { return static_cast<int>(images.size()); }
};

Matrix MakePatterns(const DatasetConfig& config);
Dataset GenerateDataset(const DatasetConfig& config, EmbeddingSpace space);

// Directory layout: manifest.tsv, images/NNNNNN.f32 (raw little-endian
// float32), space.bin (tensor container with concept/text directions and
// patterns). `echo` (the effective config) is written as `#` comment lines
// at the top of the manifest and as the space.bin echo block.
// Raw little-endian float32 pixels, the on-disk image format.
std::string ImageToF32Bytes(const Vector& image);

void SaveDataset(const Dataset& data, const std::filesystem::path& dir,
                 const std::string& echo);
Dataset LoadDataset(const std::filesystem::path& dir);

}  // namespace clipvq

#endif  // CLIPVQ_DATASET_H_
