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

#ifndef CLIPVQ_ERRORS_H_
#define CLIPVQ_ERRORS_H_

#include <stdexcept>
#include <string>

namespace clipvq {

// Invalid argument to a library operation (bad shape, out-of-range index...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Conditioning on an event of probability zero.
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite loss or diverging optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A function under test returned a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mask token survived the reverse chain.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incompatible on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line or config input; the message names the offending flag/key.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation called in the wrong state (e.g. backward without a forward cache).
class UsageStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace clipvq

#endif  // CLIPVQ_ERRORS_H_
