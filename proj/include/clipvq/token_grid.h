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

#ifndef CLIPVQ_TOKEN_GRID_H_
#define CLIPVQ_TOKEN_GRID_H_

#include <algorithm>
#include <vector>

namespace clipvq {

// Flattened latent token grid; values in 0..K, where K is the mask.
struct TokenGrid {
  std::vector<int> tokens;

  TokenGrid() = default;
  explicit TokenGrid(std::vector<int> t) : tokens(std::move(t)) {}
  static TokenGrid Filled(int length, int value) {
    return TokenGrid(std::vector<int>(static_cast<size_t>(length), value));
  }

  int size() const { return static_cast<int>(tokens.size()); }
  int operator[](int i) const { return tokens[static_cast<size_t>(i)]; }
  int& operator[](int i) { return tokens[static_cast<size_t>(i)]; }
  bool Contains(int value) const {
    return std::find(tokens.begin(), tokens.end(), value) != tokens.end();
  }

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

}  // namespace clipvq

#endif  // CLIPVQ_TOKEN_GRID_H_
