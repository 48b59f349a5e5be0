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

#ifndef CLIPVQ_CONFIG_H_
#define CLIPVQ_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace clipvq {

// Flat key=value configuration. Lines are `key = value`; `#` starts a
// comment. Every key must be registered; missing keys take their default.
class Config {
 public:
  enum class Type { kInt, kDouble, kString };
  struct Key {
    std::string name;
    Type type;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& Registry();

  Config();  // all defaults
  static Config Parse(const std::string& text);
  static Config Load(const std::filesystem::path& path);

  // Validates the key and the value's type; throws UsageError.
  void Set(const std::string& key, const std::string& value);

  int64_t GetInt(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  std::string GetString(const std::string& key) const;

  // Effective config, one line per registered key in registry order.
  std::string ToText() const;

 private:
  const Key& Lookup(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

// Formats a double so that parsing it back yields the same value.
std::string FormatDouble(double v);

}  // namespace clipvq

#endif  // CLIPVQ_CONFIG_H_
