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

#ifndef NPCLAB_CHECKPOINT_HPP_
#define NPCLAB_CHECKPOINT_HPP_

#include <filesystem>
#include <optional>
#include <string>

#include "npclab/correction.hpp"
#include "npclab/encoder.hpp"

namespace npclab {

// Versioned JSON record of vocabulary + parameters + scoring setup. The
// serialization is deterministic, so a fixed seed produces byte-identical
// checkpoint files. Files are written atomically (temp file + rename).
struct CheckpointMeta {
  Similarity kind = Similarity::kCosine;
  double tau = 20.0;
  int hidden = 64;
  bool shared_towers = true;
  std::string config_hash;
};

struct Checkpoint {
  Vocabulary vocab;
  ModelParams params;
  CheckpointMeta meta;
  // Present only in teacher checkpoints.
  std::optional<double> alpha;
  std::optional<long long> step;
};

void save_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab,
                     const ModelParams& params, const CheckpointMeta& meta);

// Same format as the student checkpoint plus the EMA coefficient and the
// update counter.
void save_teacher_checkpoint(const std::filesystem::path& path,
                             const Vocabulary& vocab,
                             const TeacherState& teacher,
                             const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over a canonical string, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& content);

}  // namespace npclab

#endif  // NPCLAB_CHECKPOINT_HPP_
