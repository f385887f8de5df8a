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

#include "npclab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "npclab/errors.hpp"
#include "npclab/io.hpp"
#include "npclab/rng.hpp"

namespace npclab {

namespace {

using json = nlohmann::json;

// Fraction of filler words drawn from the shared background pool, and the
// number of words a query shares verbatim with its own document. The core
// is what makes a pair retrievable among same-topic documents.
constexpr double kBackgroundRate = 0.2;
constexpr int kCoreWords = 3;

std::string word_for(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%05d", id);
  return buf;
}

std::string make_id(char prefix, const std::string& split, int topic,
                    int serial) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%c-%s-%02d-%05d", prefix, split.c_str(),
                topic, serial);
  return buf;
}

std::string require_string_field(const json& j, const char* field,
                                 const std::filesystem::path& path,
                                 std::size_t line_no) {
  if (!j.contains(field) || !j[field].is_string()) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": missing or non-string field '"
        << field << "'";
    throw DataError(msg.str());
  }
  return j[field].get<std::string>();
}

void insert_document(DocumentCollection& collection, const std::string& doc_id,
                     const std::string& doc_text,
                     const std::filesystem::path& path, std::size_t line_no) {
  auto [it, inserted] = collection.emplace(doc_id, doc_text);
  if (!inserted && it->second != doc_text) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": doc_id '" << doc_id
        << "' bound to two different texts";
    throw DataError(msg.str());
  }
}

}  // namespace

SyntheticLayout synthetic_layout(int vocab_size, int num_topics) {
  if (num_topics < 1) {
    throw ConfigError("synthetic_layout: num_topics must be >= 1");
  }
  if (vocab_size < 2 * num_topics) {
    throw ConfigError("synthetic_layout: vocab_size must be >= 2 * num_topics");
  }
  const int block = std::max(1, (vocab_size * 4) / (5 * num_topics));
  const int background_count = vocab_size - num_topics * block;
  SyntheticLayout layout;
  layout.background.reserve(background_count);
  for (int id = 0; id < background_count; ++id) {
    layout.background.push_back(id);
  }
  layout.topic_blocks.resize(num_topics);
  int next = background_count;
  for (int t = 0; t < num_topics; ++t) {
    for (int k = 0; k < block; ++k) {
      layout.topic_blocks[t].push_back(next++);
    }
  }
  return layout;
}

std::optional<std::string> topic_key(std::string_view id) {
  // Expected shape: <prefix>-<split>-<topic>-<serial>.
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= id.size()) {
    const std::size_t pos = id.find('-', start);
    if (pos == std::string_view::npos) {
      parts.push_back(id.substr(start));
      break;
    }
    parts.push_back(id.substr(start, pos - start));
    start = pos + 1;
  }
  if (parts.size() != 4 || parts[2].empty()) {
    return std::nullopt;
  }
  for (char c : parts[2]) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  return std::string(parts[2]);
}

Dataset load_pairs(const std::filesystem::path& path) {
  const std::string content = read_text_file(path);
  Dataset dataset;
  std::unordered_set<std::string> seen_query_ids;
  std::istringstream stream(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw DataError(msg.str());
    }
    TrainingPair pair;
    pair.pair_id = static_cast<long long>(dataset.pairs.size());
    pair.query_id = require_string_field(j, "query_id", path, line_no);
    pair.query_text = require_string_field(j, "query", path, line_no);
    pair.doc_id = require_string_field(j, "doc_id", path, line_no);
    pair.doc_text = require_string_field(j, "doc", path, line_no);
    if (j.contains("truth_clean")) {
      if (!j["truth_clean"].is_boolean()) {
        std::ostringstream msg;
        msg << path.string() << ":" << line_no
            << ": truth_clean must be a boolean";
        throw DataError(msg.str());
      }
      pair.truth_clean = j["truth_clean"].get<bool>();
    }
    if (!seen_query_ids.insert(pair.query_id).second) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": duplicate query_id '"
          << pair.query_id << "'";
      throw DataError(msg.str());
    }
    insert_document(dataset.collection, pair.doc_id, pair.doc_text, path,
                    line_no);
    dataset.pairs.push_back(std::move(pair));
  }
  return dataset;
}

DocumentCollection load_collection(const std::filesystem::path& path) {
  const std::string content = read_text_file(path);
  DocumentCollection collection;
  std::istringstream stream(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw DataError(msg.str());
    }
    const std::string doc_id = require_string_field(j, "doc_id", path, line_no);
    const std::string doc_text = require_string_field(j, "doc", path, line_no);
    insert_document(collection, doc_id, doc_text, path, line_no);
  }
  return collection;
}

void save_pairs(const std::filesystem::path& path,
                std::span<const TrainingPair> pairs) {
  std::string out;
  for (const TrainingPair& pair : pairs) {
    json j;
    j["query_id"] = pair.query_id;
    j["query"] = pair.query_text;
    j["doc_id"] = pair.doc_id;
    j["doc"] = pair.doc_text;
    if (pair.truth_clean.has_value()) {
      j["truth_clean"] = *pair.truth_clean;
    }
    out += j.dump();
    out += '\n';
  }
  atomic_write_text_file(path, out);
}

void save_collection(const std::filesystem::path& path,
                     const DocumentCollection& collection) {
  std::string out;
  for (const auto& [doc_id, doc_text] : collection) {
    json j;
    j["doc_id"] = doc_id;
    j["doc"] = doc_text;
    out += j.dump();
    out += '\n';
  }
  atomic_write_text_file(path, out);
}

void check_referential_integrity(std::span<const TrainingPair> pairs,
                                 const DocumentCollection& collection) {
  for (const TrainingPair& pair : pairs) {
    const auto it = collection.find(pair.doc_id);
    if (it == collection.end()) {
      throw DataError("dangling doc_id '" + pair.doc_id +
                      "' referenced by query '" + pair.query_id + "'");
    }
    if (it->second != pair.doc_text) {
      throw DataError("doc_id '" + pair.doc_id +
                      "' has different text in pairs and collection");
    }
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.pairs_per_topic < 1) {
    throw ConfigError("generate_synthetic: pairs_per_topic must be >= 1");
  }
  if (spec.tokens_per_text < 1) {
    throw ConfigError("generate_synthetic: tokens_per_text must be >= 1");
  }
  const SyntheticLayout layout =
      synthetic_layout(spec.vocab_size, spec.num_topics);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset dataset;
  dataset.pairs.reserve(
      static_cast<std::size_t>(spec.num_topics) * spec.pairs_per_topic);

  for (int t = 0; t < spec.num_topics; ++t) {
    const std::vector<int>& block = layout.topic_blocks[t];
    std::uniform_int_distribution<std::size_t> pick_block(0, block.size() - 1);
    const int core_size = std::min(
        {kCoreWords, spec.tokens_per_text, static_cast<int>(block.size())});
    for (int i = 0; i < spec.pairs_per_topic; ++i) {
      const int serial = t * spec.pairs_per_topic + i;

      std::vector<int> core;
      std::sample(block.begin(), block.end(), std::back_inserter(core),
                  core_size, rng);

      auto draw_text = [&]() {
        std::vector<int> words = core;
        for (int k = core_size; k < spec.tokens_per_text; ++k) {
          if (!layout.background.empty() && unit(rng) < kBackgroundRate) {
            std::uniform_int_distribution<std::size_t> pick_bg(
                0, layout.background.size() - 1);
            words.push_back(layout.background[pick_bg(rng)]);
          } else {
            words.push_back(block[pick_block(rng)]);
          }
        }
        std::shuffle(words.begin(), words.end(), rng);
        std::string text;
        for (std::size_t k = 0; k < words.size(); ++k) {
          if (k > 0) text += ' ';
          text += word_for(words[k]);
        }
        return text;
      };

      TrainingPair pair;
      pair.pair_id = serial;
      pair.query_id = make_id('q', spec.split, t, serial);
      pair.doc_id = make_id('d', spec.split, t, serial);
      pair.query_text = draw_text();
      pair.doc_text = draw_text();
      dataset.collection.emplace(pair.doc_id, pair.doc_text);
      dataset.pairs.push_back(std::move(pair));
    }
  }
  return dataset;
}

std::vector<TrainingPair> inject_noise(std::vector<TrainingPair> pairs,
                                       const NoiseSpec& spec) {
  if (pairs.empty()) {
    throw ContractViolation("inject_noise: empty pair list");
  }
  if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
    throw ConfigError("inject_noise: ratio must be in [0, 1]");
  }
  const int n = static_cast<int>(pairs.size());
  // floor(ratio * N); the epsilon absorbs representation error in ratios
  // like 0.3 that are not exact binary fractions.
  const int num_corrupt =
      static_cast<int>(std::floor(spec.ratio * n + 1e-9));

  for (TrainingPair& pair : pairs) {
    pair.truth_clean = true;
  }
  if (num_corrupt == 0) {
    return pairs;
  }

  struct Original {
    std::string doc_id;
    std::string doc_text;
    std::optional<std::string> doc_topic;
  };
  std::vector<Original> originals;
  originals.reserve(pairs.size());
  for (const TrainingPair& pair : pairs) {
    originals.push_back({pair.doc_id, pair.doc_text, topic_key(pair.doc_id)});
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<int> order(pairs.size());
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> corrupt(order.begin(), order.begin() + num_corrupt);
  std::sort(corrupt.begin(), corrupt.end());

  std::uniform_int_distribution<int> pick_pair(0, n - 1);
  for (int idx : corrupt) {
    const std::optional<std::string> query_topic =
        topic_key(pairs[idx].query_id);
    bool replaced = false;
    // Replacements are drawn from the original documents of other pairs;
    // a draw is rejected until it is genuinely unrelated to the query.
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const int j = pick_pair(rng);
      if (j == idx) continue;
      if (originals[j].doc_id == originals[idx].doc_id) continue;
      if (query_topic.has_value() && originals[j].doc_topic.has_value() &&
          *originals[j].doc_topic == *query_topic) {
        continue;
      }
      pairs[idx].doc_id = originals[j].doc_id;
      pairs[idx].doc_text = originals[j].doc_text;
      pairs[idx].truth_clean = false;
      replaced = true;
      break;
    }
    if (!replaced) {
      throw DataError(
          "inject_noise: cannot find an unrelated replacement document for "
          "query '" +
          pairs[idx].query_id + "'");
    }
  }
  return pairs;
}

std::vector<std::vector<int>> batches(int num_pairs, int batch_size,
                                      std::uint64_t seed, int epoch) {
  if (batch_size < 2) {
    throw ConfigError("batches: batch_size must be >= 2");
  }
  if (num_pairs == 0) {
    return {};
  }
  if (num_pairs == 1) {
    throw ContractViolation("batches: a single pair cannot form a batch");
  }
  std::vector<int> order(num_pairs);
  for (int i = 0; i < num_pairs; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<int>> out;
  for (int start = 0; start < num_pairs; start += batch_size) {
    const int end = std::min(start + batch_size, num_pairs);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (out.size() >= 2 && out.back().size() < 2) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

}  // namespace npclab
