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

#include "clipvq/tensor_file.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "clipvq/errors.h"

namespace clipvq {
namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get(const char* what) {
    Need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string GetString(size_t n, const char* what) {
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void GetFloats(std::vector<float>& out, size_t n, const char* what) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) {
      throw FormatError(std::string("truncated file while reading ") + what);
    }
    out.resize(n);
    if (n > 0) std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated file while reading ") + what);
    }
  }

  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

size_t NamedTensor::element_count() const {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return n;
}

const NamedTensor* TensorFile::Find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& TensorFile::Get(const std::string& name) const {
  const NamedTensor* t = Find(name);
  if (t == nullptr) throw FormatError("missing tensor '" + name + "'");
  return *t;
}

void TensorFile::Add(NamedTensor t) {
  if (Find(t.name) != nullptr) throw ArgumentError("duplicate tensor '" + t.name + "'");
  if (t.values.size() != t.element_count()) {
    throw ArgumentError("tensor '" + t.name + "' has inconsistent dims");
  }
  tensors.push_back(std::move(t));
}

std::string SerializeTensorFile(const TensorFile& file) {
  std::string out(TensorFile::kMagic, 4);
  Put<uint32_t>(out, TensorFile::kVersion);
  Put<uint32_t>(out, static_cast<uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    if (t.name.size() > 0xFFFF) throw ArgumentError("tensor name too long");
    if (t.dims.size() > 0xFF) throw ArgumentError("tensor rank too large");
    if (t.values.size() != t.element_count()) {
      throw ArgumentError("tensor '" + t.name + "' has inconsistent dims");
    }
    Put<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
    out += t.name;
    Put<uint8_t>(out, static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) Put<uint32_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.values.data()),
               t.values.size() * sizeof(float));
  }
  Put<uint32_t>(out, static_cast<uint32_t>(file.echo.size()));
  out += file.echo;
  return out;
}

TensorFile ParseTensorFile(const std::string& bytes) {
  Reader in(bytes);
  const std::string magic = in.GetString(4, "magic");
  if (magic != std::string(TensorFile::kMagic, 4)) {
    throw FormatError("bad magic: expected 'CVQD', found '" + magic + "'");
  }
  const auto version = in.Get<uint32_t>("version");
  if (version != TensorFile::kVersion) {
    throw FormatError("unsupported container version: expected " +
                      std::to_string(TensorFile::kVersion) + ", found " +
                      std::to_string(version));
  }
  const auto count = in.Get<uint32_t>("tensor count");
  TensorFile file;
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = in.Get<uint16_t>("name length");
    t.name = in.GetString(name_len, "tensor name");
    const auto rank = in.Get<uint8_t>("rank");
    for (uint8_t r = 0; r < rank; ++r) t.dims.push_back(in.Get<uint32_t>("dims"));
    in.GetFloats(t.values, t.element_count(), "tensor values");
    if (file.Find(t.name) != nullptr) {
      throw FormatError("duplicate tensor '" + t.name + "'");
    }
    file.tensors.push_back(std::move(t));
  }
  const auto echo_len = in.Get<uint32_t>("echo length");
  file.echo = in.GetString(echo_len, "config echo");
  if (in.remaining() != 0) {
    throw FormatError(std::to_string(in.remaining()) + " trailing bytes after echo block");
  }
  return file;
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void SaveTensorFile(const TensorFile& file, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeTensorFile(file));
}

TensorFile LoadTensorFile(const std::filesystem::path& path) {
  return ParseTensorFile(ReadFileBytes(path));
}

}  // namespace clipvq
