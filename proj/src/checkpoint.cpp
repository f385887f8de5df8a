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

#include "npclab/checkpoint.hpp"

#include <cstdio>

#include "json.hpp"
#include "npclab/errors.hpp"
#include "npclab/io.hpp"

namespace npclab {

namespace {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

json tower_to_json(const EncoderParams& tower) {
  json j;
  j["vocab_size"] = tower.vocab_size;
  j["hidden"] = tower.hidden;
  j["embedding"] = tower.embedding;
  j["projection"] = tower.projection;
  j["bias"] = tower.bias;
  return j;
}

EncoderParams tower_from_json(const json& j) {
  EncoderParams tower;
  tower.vocab_size = j.at("vocab_size").get<int>();
  tower.hidden = j.at("hidden").get<int>();
  tower.embedding = j.at("embedding").get<std::vector<double>>();
  tower.projection = j.at("projection").get<std::vector<double>>();
  tower.bias = j.at("bias").get<std::vector<double>>();
  const auto expected_embedding =
      static_cast<std::size_t>(tower.vocab_size) * tower.hidden;
  const auto expected_projection =
      static_cast<std::size_t>(tower.hidden) * tower.hidden;
  if (tower.embedding.size() != expected_embedding ||
      tower.projection.size() != expected_projection ||
      tower.bias.size() != static_cast<std::size_t>(tower.hidden)) {
    throw DataError("checkpoint: tower shape mismatch");
  }
  return tower;
}

json to_json(const Vocabulary& vocab, const ModelParams& params,
             const CheckpointMeta& meta) {
  json j;
  j["format_version"] = kFormatVersion;
  j["similarity"] = similarity_name(meta.kind);
  j["tau"] = meta.tau;
  j["hidden"] = meta.hidden;
  j["shared_towers"] = meta.shared_towers;
  j["config_hash"] = meta.config_hash;
  j["vocab"] = vocab.tokens();
  j["query_tower"] = tower_to_json(params.query_tower);
  if (params.doc_tower.has_value()) {
    j["doc_tower"] = tower_to_json(*params.doc_tower);
  } else {
    j["doc_tower"] = nullptr;
  }
  return j;
}

}  // namespace

std::string fnv1a_hex(const std::string& content) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : content) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab,
                     const ModelParams& params, const CheckpointMeta& meta) {
  atomic_write_text_file(path, to_json(vocab, params, meta).dump());
}

void save_teacher_checkpoint(const std::filesystem::path& path,
                             const Vocabulary& vocab,
                             const TeacherState& teacher,
                             const CheckpointMeta& meta) {
  json j = to_json(vocab, teacher.params, meta);
  j["alpha"] = teacher.alpha;
  j["step"] = teacher.step;
  atomic_write_text_file(path, j.dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("checkpoint: " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("checkpoint: unsupported format version in " +
                      path.string());
    }
    Checkpoint ckpt;
    ckpt.meta.kind = similarity_from_name(j.at("similarity").get<std::string>());
    ckpt.meta.tau = j.at("tau").get<double>();
    ckpt.meta.hidden = j.at("hidden").get<int>();
    ckpt.meta.shared_towers = j.at("shared_towers").get<bool>();
    ckpt.meta.config_hash = j.at("config_hash").get<std::string>();
    ckpt.vocab =
        Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    ckpt.params.query_tower = tower_from_json(j.at("query_tower"));
    if (!j.at("doc_tower").is_null()) {
      ckpt.params.doc_tower = tower_from_json(j.at("doc_tower"));
    }
    if (j.contains("alpha")) {
      ckpt.alpha = j.at("alpha").get<double>();
      ckpt.step = j.at("step").get<long long>();
    }
    if (ckpt.vocab.size() != ckpt.params.query_tower.vocab_size) {
      throw DataError("checkpoint: vocabulary/embedding size mismatch");
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError("checkpoint: " + path.string() + ": " + e.what());
  }
}

}  // namespace npclab
