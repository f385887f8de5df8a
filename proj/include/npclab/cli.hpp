// Copyright 2026 The npclab Authors.
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

#ifndef NPCLAB_CLI_HPP_
#define NPCLAB_CLI_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "npclab/training.hpp"

namespace npclab {

// Experiment description: training hyperparameters plus data paths, read
// from a flat key=value file. Unknown keys are rejected.
struct ExperimentConfig {
  TrainConfig train;
  std::filesystem::path train_pairs;
  std::filesystem::path dev_pairs;  // empty -> no dev evaluation
  std::vector<std::filesystem::path> collections;
  std::filesystem::path out_dir;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Applies one config-file entry; throws ConfigError on unknown keys or
// unparsable values.
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

// Exit codes: 0 success, 2 usage/configuration, 3 data or contract error,
// 4 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace npclab

#endif  // NPCLAB_CLI_HPP_
