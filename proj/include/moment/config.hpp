// Copyright 2026 The MoMent Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration documents. Every key is checked against a fixed schema
// before any work starts; unknown keys and wrongly typed values are rejected
// with the dotted path of the offending key.

#ifndef MOMENT_CONFIG_HPP_
#define MOMENT_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "moment/synth.hpp"
#include "moment/trainer.hpp"

namespace moment::config {

struct RunConfig {
  std::uint64_t seed = 7;
  train::TrainConfig train;
  synth::SynthConfig synth;
  std::array<double, 3> split_ratios = {0.7, 0.15, 0.15};
  std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::size_t edge_class_epochs = 5;
  std::size_t kde_grid_points = 512;
  // The document as given, echoed into reports.
  nlohmann::json source = nlohmann::json::object();

  // Propagates the run seed into the training and generator configs.
  void set_seed(std::uint64_t s);
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// Serialises the effective configuration (after overrides).
nlohmann::json effective_config(const RunConfig& config);

// FNV-1a over the bytes of each file, in order; 16 hex digits.
std::string content_hash(const std::vector<std::filesystem::path>& files);

}  // namespace moment::config

#endif  // MOMENT_CONFIG_HPP_
