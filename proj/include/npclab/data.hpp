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

#ifndef NPCLAB_DATA_HPP_
#define NPCLAB_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace npclab {

// One (query, annotated-positive-document) training record. truth_clean is
// known only for synthetic data with injected noise.
struct TrainingPair {
  long long pair_id = 0;
  std::string query_id;
  std::string query_text;
  std::string doc_id;
  std::string doc_text;
  std::optional<bool> truth_clean;
};

// doc_id -> doc_text. Ordered so that iteration is deterministic.
using DocumentCollection = std::map<std::string, std::string>;

struct Dataset {
  std::vector<TrainingPair> pairs;
  DocumentCollection collection;
};

struct NoiseSpec {
  double ratio = 0.0;  // fraction of pairs to corrupt, in [0, 1]
  std::uint64_t seed = 0;
};

struct SyntheticSpec {
  int num_topics = 20;
  int pairs_per_topic = 100;
  int vocab_size = 500;     // distinct word types available to the generator
  int tokens_per_text = 8;  // words per query and per document
  std::uint64_t seed = 0;
  std::string split = "train";  // embedded in ids to keep splits disjoint
};

// Word-id partition used by the generator: a shared background pool plus one
// disjoint block per topic. Depends only on (vocab_size, num_topics).
struct SyntheticLayout {
  std::vector<int> background;
  std::vector<std::vector<int>> topic_blocks;
};

SyntheticLayout synthetic_layout(int vocab_size, int num_topics);

// Topic tag parsed from a synthetic id of the form "q-<split>-<topic>-<n>"
// or "d-<split>-<topic>-<n>"; nullopt for ids that do not match.
std::optional<std::string> topic_key(std::string_view id);

// Pairs file: JSONL with fields query_id, query, doc_id, doc and optional
// truth_clean. pair_id is the 0-based record index. The returned collection
// holds the documents appearing inline in the file. A doc_id bound to two
// different texts is an integrity error; malformed lines report their line
// number.
Dataset load_pairs(const std::filesystem::path& path);

// Collection file: JSONL with fields doc_id, doc.
DocumentCollection load_collection(const std::filesystem::path& path);

void save_pairs(const std::filesystem::path& path,
                std::span<const TrainingPair> pairs);
void save_collection(const std::filesystem::path& path,
                     const DocumentCollection& collection);

// Every doc_id referenced by a pair must exist in the collection with the
// same text. Throws DataError otherwise.
void check_referential_integrity(std::span<const TrainingPair> pairs,
                                 const DocumentCollection& collection);

// Generates one pair (query + its own document) per slot: tokens_per_text
// words each, sharing a small per-pair core from the pair's topic block,
// with the remaining words drawn from the block plus background noise.
// Requires vocab_size >= 2 * num_topics.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Replaces the annotated document of floor(ratio * N) uniformly chosen pairs
// with the original document of a different pair, re-drawing replacements
// whose topic matches the query (when topics are identifiable from the ids).
// Corrupted pairs get truth_clean = false, all others true. Replacement
// documents are sampled with replacement across corruptions.
std::vector<TrainingPair> inject_noise(std::vector<TrainingPair> pairs,
                                       const NoiseSpec& spec);

// Epoch-seeded shuffle followed by contiguous chunks of batch_size indices.
// A final chunk smaller than 2 is merged into the previous one. Requires
// batch_size >= 2; a 1-pair dataset cannot be batched.
std::vector<std::vector<int>> batches(int num_pairs, int batch_size,
                                      std::uint64_t seed, int epoch);

}  // namespace npclab

#endif  // NPCLAB_DATA_HPP_
