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

#include "clipvq/config.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "clipvq/errors.h"
#include "clipvq/tensor_file.h"

namespace clipvq {
namespace {

using T = Config::Type;

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool ParsesAs(T type, const std::string& v) {
  if (type == T::kString) return true;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  if (type == T::kInt) {
    int64_t out;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
  }
  double out;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::vector<Config::Key>& Config::Registry() {
  static const std::vector<Key> kKeys = {
      {"seed", T::kInt, "1234", "master seed for training and sampling"},
      {"threads", T::kInt, "1", "worker threads for batch gradients"},
      {"data.images_per_concept", T::kInt, "512", "images generated per concept"},
      {"data.pixel_noise", T::kDouble, "0.05", "per-pixel Gaussian noise sigma"},
      {"data.alphabet", T::kInt, "8", "number of prototype patches shared by patterns"},
      {"data.seed", T::kInt, "7", "dataset seed"},
      {"space.dim", T::kInt, "32", "embedding width d"},
      {"space.concepts", T::kInt, "8", "concept count C"},
      {"space.gap_angle", T::kDouble, "1.1592794807274085", "image/text gap angle (acos 0.4)"},
      {"space.jitter", T::kDouble, "0.1", "image embedding angular spread (rad)"},
      {"space.seed", T::kInt, "11", "embedding space seed"},
      {"quantizer.codebook_size", T::kInt, "16", "K"},
      {"quantizer.dim_z", T::kInt, "8", "codebook entry width"},
      {"quantizer.patch", T::kInt, "4", "compression rate f"},
      {"quantizer.image_side", T::kInt, "16", "image side in pixels"},
      {"quantizer.steps", T::kInt, "3000", "quantizer optimisation steps"},
      {"quantizer.batch", T::kInt, "16", "quantizer batch size"},
      {"quantizer.lr", T::kDouble, "0.01", "quantizer learning rate"},
      {"quantizer.beta1", T::kDouble, "0.5", "quantizer Adam beta1"},
      {"quantizer.beta2", T::kDouble, "0.9", "quantizer Adam beta2"},
      {"quantizer.tau_start", T::kDouble, "0.9", "initial Gumbel temperature"},
      {"quantizer.tau_end", T::kDouble, "0.01", "final Gumbel temperature"},
      {"schedule.steps", T::kInt, "100", "diffusion steps T"},
      {"schedule.replace", T::kDouble, "0.05", "rho in cum_alpha(t) = (1 - t/T)(1 - rho t/T)"},
      {"denoiser.d_model", T::kInt, "64", "transformer width"},
      {"denoiser.heads", T::kInt, "4", "attention heads"},
      {"denoiser.blocks", T::kInt, "2", "transformer blocks"},
      {"denoiser.cond_hidden", T::kInt, "64", "modulation MLP hidden width"},
      {"denoiser.ff_mult", T::kInt, "4", "feed-forward expansion"},
      {"diffusion.steps", T::kInt, "4000", "diffusion training steps"},
      {"diffusion.batch", T::kInt, "16", "diffusion batch size"},
      {"diffusion.lr", T::kDouble, "0.001", "denoiser learning rate"},
      {"diffusion.beta1", T::kDouble, "0.9", "denoiser Adam beta1"},
      {"diffusion.beta2", T::kDouble, "0.999", "denoiser Adam beta2"},
      {"diffusion.alpha", T::kDouble, "0.25", "pseudo-text noise scale"},
      {"diffusion.aux_weight", T::kDouble, "0.001", "weight of the clean-token cross-entropy"},
      {"cfg.steps", T::kInt, "1000", "guidance fine-tuning steps"},
      {"cfg.batch", T::kInt, "16", "guidance fine-tuning batch size"},
      {"cfg.lr", T::kDouble, "0.0005", "guidance fine-tuning learning rate"},
      {"cfg.p_drop", T::kDouble, "0.1", "probability of swapping in the null condition"},
      {"sample.guide", T::kDouble, "3", "guidance scale s"},
      {"sample.truncation", T::kDouble, "0.9", "truncation ratio r"},
      {"eval.best_of", T::kInt, "16", "candidates per prompt for best-of selection"},
      {"eval.samples_per_concept", T::kInt, "64", "generated images per concept"},
      {"eval.feature_dim", T::kInt, "16", "projected feature width for the Frechet distance"},
      {"eval.seed", T::kInt, "99", "seed of the evaluation sampler and feature projection"},
      {"log.every", T::kInt, "100", "metrics cadence in steps"},
  };
  return kKeys;
}

Config::Config() {
  for (const auto& k : Registry()) values_[k.name] = k.default_value;
}

const Config::Key& Config::Lookup(const std::string& key) const {
  for (const auto& k : Registry()) {
    if (k.name == key) return k;
  }
  throw UsageError("unknown config key '" + key + "'");
}

void Config::Set(const std::string& key, const std::string& value) {
  const Key& k = Lookup(key);
  if (!ParsesAs(k.type, value)) {
    throw UsageError("config key '" + key + "' has invalid value '" + value + "'");
  }
  values_[key] = value;
}

Config Config::Parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.Set(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
  }
  return cfg;
}

Config Config::Load(const std::filesystem::path& path) {
  return Parse(ReadFileBytes(path));
}

int64_t Config::GetInt(const std::string& key) const {
  const Key& k = Lookup(key);
  if (k.type != T::kInt) throw UsageError("config key '" + key + "' is not an integer");
  return std::stoll(values_.at(key));
}

double Config::GetDouble(const std::string& key) const {
  const Key& k = Lookup(key);
  if (k.type == T::kString) throw UsageError("config key '" + key + "' is not numeric");
  return std::stod(values_.at(key));
}

std::string Config::GetString(const std::string& key) const {
  Lookup(key);
  return values_.at(key);
}

std::string Config::ToText() const {
  std::string out;
  for (const auto& k : Registry()) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

}  // namespace clipvq
