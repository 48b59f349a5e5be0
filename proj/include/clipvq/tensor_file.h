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

#ifndef CLIPVQ_TENSOR_FILE_H_
#define CLIPVQ_TENSOR_FILE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace clipvq {

struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> values;  // row-major

  size_t element_count() const;
};

// Container layout (all integers little-endian):
//   "CVQD" | u32 version | u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//               row-major f32 values
//   u32 echo length | UTF-8 echo text
struct TensorFile {
  static constexpr char kMagic[4] = {'C', 'V', 'Q', 'D'};
  static constexpr uint32_t kVersion = 1;

  std::vector<NamedTensor> tensors;
  std::string echo;

  const NamedTensor* Find(const std::string& name) const;
  // Throws FormatError if absent.
  const NamedTensor& Get(const std::string& name) const;
  void Add(NamedTensor t);
};

std::string SerializeTensorFile(const TensorFile& file);
// Throws FormatError on bad magic, version, truncation or trailing bytes.
TensorFile ParseTensorFile(const std::string& bytes);

// Writes `path.tmp` then renames over `path`. Throws IoError.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& bytes);
std::string ReadFileBytes(const std::filesystem::path& path);

void SaveTensorFile(const TensorFile& file, const std::filesystem::path& path);
TensorFile LoadTensorFile(const std::filesystem::path& path);

}  // namespace clipvq

#endif  // CLIPVQ_TENSOR_FILE_H_
