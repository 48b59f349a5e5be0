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

#ifndef CLIPVQ_PARAMS_H_
#define CLIPVQ_PARAMS_H_

// Helpers over parameter records. A record exposes
//   template <class F> void Visit(F&& f);        // and a const overload
// calling f(name, tensor) for every Eigen matrix/vector it owns, always in
// the same order.

#include <span>
#include <string>
#include <vector>

#include "clipvq/errors.h"
#include "clipvq/numerics.h"
#include "clipvq/tensor_file.h"

namespace clipvq {

template <class P>
size_t ParamCount(const P& p) {
  size_t n = 0;
  p.Visit([&](const std::string&, const auto& t) { n += static_cast<size_t>(t.size()); });
  return n;
}

template <class P>
std::vector<double> Flatten(const P& p) {
  std::vector<double> out;
  out.reserve(ParamCount(p));
  p.Visit([&](const std::string&, const auto& t) {
    out.insert(out.end(), t.data(), t.data() + t.size());
  });
  return out;
}

template <class P>
void Unflatten(P& p, std::span<const double> flat) {
  if (flat.size() != ParamCount(p)) throw ArgumentError("Unflatten: size mismatch");
  size_t offset = 0;
  p.Visit([&](const std::string&, auto& t) {
    std::copy(flat.begin() + offset, flat.begin() + offset + t.size(), t.data());
    offset += static_cast<size_t>(t.size());
  });
}

// Same-shaped record filled with zeros.
template <class P>
P ZerosLike(const P& p) {
  P z = p;
  z.Visit([](const std::string&, auto& t) { t.setZero(); });
  return z;
}

// acc += other, tensor by tensor.
template <class P>
void AddInto(P& acc, const P& other, double scale = 1.0) {
  std::vector<const double*> src;
  other.Visit([&](const std::string&, const auto& t) { src.push_back(t.data()); });
  size_t i = 0;
  acc.Visit([&](const std::string&, auto& t) {
    const double* s = src[i++];
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] += scale * s[k];
  });
}

template <class P>
void Scale(P& p, double factor) {
  p.Visit([&](const std::string&, auto& t) { t *= factor; });
}

template <class P>
bool AllFinite(const P& p) {
  bool ok = true;
  p.Visit([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

template <class T>
NamedTensor ToNamedTensor(const std::string& name, const T& t) {
  NamedTensor out;
  out.name = name;
  if constexpr (T::ColsAtCompileTime == 1) {
    out.dims = {static_cast<uint32_t>(t.size())};
    out.values.assign(t.data(), t.data() + t.size());
  } else {
    out.dims = {static_cast<uint32_t>(t.rows()), static_cast<uint32_t>(t.cols())};
    out.values.reserve(static_cast<size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        out.values.push_back(static_cast<float>(t(r, c)));
      }
    }
  }
  return out;
}

template <class T>
void FromNamedTensor(const NamedTensor& src, T& t) {
  if constexpr (T::ColsAtCompileTime == 1) {
    if (src.dims.size() != 1 || src.dims[0] != t.size()) {
      throw FormatError("tensor '" + src.name + "' has unexpected shape");
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = src.values[static_cast<size_t>(i)];
  } else {
    if (src.dims.size() != 2 || src.dims[0] != t.rows() || src.dims[1] != t.cols()) {
      throw FormatError("tensor '" + src.name + "' has unexpected shape");
    }
    size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = src.values[k++];
    }
  }
}

template <class P>
void AppendTensors(const P& p, const std::string& prefix, TensorFile& file) {
  p.Visit([&](const std::string& name, const auto& t) {
    file.Add(ToNamedTensor(prefix + name, t));
  });
}

// `p` must already have the right shapes (built from its config).
template <class P>
void ReadTensors(P& p, const std::string& prefix, const TensorFile& file) {
  p.Visit([&](const std::string& name, auto& t) {
    FromNamedTensor(file.Get(prefix + name), t);
  });
}

}  // namespace clipvq

#endif  // CLIPVQ_PARAMS_H_
