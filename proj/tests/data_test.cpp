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
#include <filesystem>
#include <set>
#include <string>

#include "doctest.h"
#include "npclab/errors.hpp"
#include "npclab/io.hpp"

using namespace npclab;

namespace {

std::filesystem::path temp_file(const std::string& name,
                                const std::string& content) {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / name;
  atomic_write_text_file(path, content);
  return path;
}

// Word ids appearing in a text, given the generator's "w%05d" naming.
std::set<int> word_ids(const std::string& text) {
  std::set<int> out;
  std::size_t pos = 0;
  while ((pos = text.find('w', pos)) != std::string::npos) {
    out.insert(std::stoi(text.substr(pos + 1, 5)));
    pos += 6;
  }
  return out;
}

}  // namespace

TEST_CASE("load_pairs on an empty file") {
  const auto path = temp_file("npclab_empty.jsonl", "");
  const Dataset dataset = load_pairs(path);
  CHECK(dataset.pairs.empty());
  CHECK(dataset.collection.empty());
}

TEST_CASE("load_pairs parses one record") {
  const auto path = temp_file(
      "npclab_one.jsonl",
      R"({"query_id":"q1","query":"how to sort","doc_id":"d1","doc":"use sort"})"
      "\n");
  const Dataset dataset = load_pairs(path);
  REQUIRE(dataset.pairs.size() == 1);
  CHECK(dataset.pairs[0].pair_id == 0);
  CHECK(dataset.pairs[0].query_text == "how to sort");
  CHECK(dataset.collection.at("d1") == "use sort");
  CHECK_FALSE(dataset.pairs[0].truth_clean.has_value());
}

TEST_CASE("load_pairs reports the offending line") {
  const auto path = temp_file(
      "npclab_bad.jsonl",
      R"({"query_id":"q1","query":"a","doc_id":"d1","doc":"b"})"
      "\n"
      R"({"query_id":"q2","query":"c","doc_id":"d2"})"
      "\n");
  CHECK_THROWS_WITH_AS(load_pairs(path),
                       doctest::Contains(":2:"), DataError);
}

TEST_CASE("load_pairs rejects conflicting doc texts and duplicate queries") {
  const auto conflicting = temp_file(
      "npclab_conflict.jsonl",
      R"({"query_id":"q1","query":"a","doc_id":"d1","doc":"b"})"
      "\n"
      R"({"query_id":"q2","query":"c","doc_id":"d1","doc":"different"})"
      "\n");
  CHECK_THROWS_AS(load_pairs(conflicting), DataError);

  const auto duplicate = temp_file(
      "npclab_dup.jsonl",
      R"({"query_id":"q1","query":"a","doc_id":"d1","doc":"b"})"
      "\n"
      R"({"query_id":"q1","query":"c","doc_id":"d2","doc":"d"})"
      "\n");
  CHECK_THROWS_AS(load_pairs(duplicate), DataError);
}

TEST_CASE("pairs round-trip through save and load") {
  SyntheticSpec spec;
  spec.num_topics = 3;
  spec.pairs_per_topic = 4;
  spec.vocab_size = 30;
  spec.seed = 5;
  Dataset dataset = generate_synthetic(spec);
  dataset.pairs = inject_noise(std::move(dataset.pairs), {0.25, 9});

  const auto path = std::filesystem::temp_directory_path() /
                    "npclab_roundtrip.jsonl";
  save_pairs(path, dataset.pairs);
  const Dataset loaded = load_pairs(path);
  REQUIRE(loaded.pairs.size() == dataset.pairs.size());
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    CHECK(loaded.pairs[i].query_id == dataset.pairs[i].query_id);
    CHECK(loaded.pairs[i].doc_id == dataset.pairs[i].doc_id);
    CHECK(loaded.pairs[i].doc_text == dataset.pairs[i].doc_text);
    CHECK(loaded.pairs[i].truth_clean == dataset.pairs[i].truth_clean);
  }
}

TEST_CASE("referential integrity catches dangling doc ids") {
  SyntheticSpec spec;
  spec.num_topics = 2;
  spec.pairs_per_topic = 2;
  spec.vocab_size = 20;
  Dataset dataset = generate_synthetic(spec);
  check_referential_integrity(dataset.pairs, dataset.collection);

  DocumentCollection smaller = dataset.collection;
  smaller.erase(dataset.pairs[0].doc_id);
  CHECK_THROWS_AS(check_referential_integrity(dataset.pairs, smaller),
                  DataError);
}

TEST_CASE("generate_synthetic counts and ids") {
  SyntheticSpec spec;
  spec.num_topics = 20;
  spec.pairs_per_topic = 100;
  spec.vocab_size = 500;
  spec.seed = 7;
  const Dataset dataset = generate_synthetic(spec);
  CHECK(dataset.pairs.size() == 2000);
  CHECK(dataset.collection.size() == 2000);
  CHECK(topic_key(dataset.pairs[0].query_id).has_value());
  CHECK(*topic_key(dataset.pairs[0].query_id) ==
        *topic_key(dataset.pairs[0].doc_id));

  // Degenerate single topic is allowed.
  SyntheticSpec single;
  single.num_topics = 1;
  single.pairs_per_topic = 3;
  single.vocab_size = 10;
  CHECK(generate_synthetic(single).pairs.size() == 3);

  SyntheticSpec bad = spec;
  bad.vocab_size = 2 * spec.num_topics - 1;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

TEST_CASE("pairs from different topics share no topic-block words") {
  SyntheticSpec spec;
  spec.num_topics = 5;
  spec.pairs_per_topic = 10;
  spec.vocab_size = 100;
  spec.seed = 21;
  const Dataset dataset = generate_synthetic(spec);
  const SyntheticLayout layout =
      synthetic_layout(spec.vocab_size, spec.num_topics);
  const std::set<int> background(layout.background.begin(),
                                 layout.background.end());

  // Oracle: set intersection over generated word ids, background removed.
  auto topical_words = [&](const TrainingPair& pair) {
    std::set<int> ids = word_ids(pair.query_text + " " + pair.doc_text);
    std::set<int> out;
    for (int id : ids) {
      if (!background.contains(id)) out.insert(id);
    }
    return out;
  };
  for (std::size_t a = 0; a < dataset.pairs.size(); a += 7) {
    for (std::size_t b = 0; b < dataset.pairs.size(); b += 11) {
      if (*topic_key(dataset.pairs[a].query_id) ==
          *topic_key(dataset.pairs[b].query_id)) {
        continue;
      }
      const std::set<int> wa = topical_words(dataset.pairs[a]);
      const std::set<int> wb = topical_words(dataset.pairs[b]);
      std::vector<int> common;
      std::set_intersection(wa.begin(), wa.end(), wb.begin(), wb.end(),
                            std::back_inserter(common));
      CHECK(common.empty());
    }
  }
}

TEST_CASE("inject_noise ratio zero keeps pairs unchanged") {
  SyntheticSpec spec;
  spec.num_topics = 4;
  spec.pairs_per_topic = 5;
  spec.vocab_size = 40;
  const Dataset dataset = generate_synthetic(spec);
  const std::vector<TrainingPair> noisy = inject_noise(dataset.pairs, {0.0, 3});
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    CHECK(noisy[i].truth_clean == true);
    CHECK(noisy[i].doc_id == dataset.pairs[i].doc_id);
    CHECK(noisy[i].doc_text == dataset.pairs[i].doc_text);
  }
}

TEST_CASE("inject_noise corrupts exactly floor(ratio * N) pairs") {
  SyntheticSpec spec;
  spec.num_topics = 10;
  spec.pairs_per_topic = 10;
  spec.vocab_size = 200;
  spec.seed = 2;
  const Dataset dataset = generate_synthetic(spec);
  const std::vector<TrainingPair> noisy = inject_noise(dataset.pairs, {0.5, 3});
  long long corrupted = 0;
  for (const TrainingPair& pair : noisy) {
    REQUIRE(pair.truth_clean.has_value());
    if (!*pair.truth_clean) ++corrupted;
  }
  CHECK(corrupted == 50);

  // 0.3 is not an exact binary fraction; the count must still be exact.
  const std::vector<TrainingPair> thirty =
      inject_noise(dataset.pairs, {0.3, 3});
  long long corrupted30 = 0;
  for (const TrainingPair& pair : thirty) {
    if (!*pair.truth_clean) ++corrupted30;
  }
  CHECK(corrupted30 == 30);
}

TEST_CASE("inject_noise replacement properties") {
  SyntheticSpec spec;
  spec.num_topics = 6;
  spec.pairs_per_topic = 8;
  spec.vocab_size = 120;
  spec.seed = 31;
  const Dataset dataset = generate_synthetic(spec);
  const NoiseSpec noise{0.4, 17};
  const std::vector<TrainingPair> noisy = inject_noise(dataset.pairs, noise);

  for (std::size_t i = 0; i < noisy.size(); ++i) {
    if (!*noisy[i].truth_clean) {
      CHECK(noisy[i].doc_id != dataset.pairs[i].doc_id);
      // Corrupted pairs point across topics.
      CHECK(*topic_key(noisy[i].doc_id) != *topic_key(noisy[i].query_id));
      // The replacement is an existing document with its original text.
      CHECK(dataset.collection.at(noisy[i].doc_id) == noisy[i].doc_text);
    } else {
      CHECK(noisy[i].doc_id == dataset.pairs[i].doc_id);
    }
  }

  // Bit-for-bit reproducible.
  const std::vector<TrainingPair> again = inject_noise(dataset.pairs, noise);
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    CHECK(again[i].doc_id == noisy[i].doc_id);
    CHECK(again[i].truth_clean == noisy[i].truth_clean);
  }
}

TEST_CASE("inject_noise fails when no unrelated replacement exists") {
  SyntheticSpec spec;
  spec.num_topics = 1;
  spec.pairs_per_topic = 2;
  spec.vocab_size = 10;
  const Dataset dataset = generate_synthetic(spec);
  CHECK_THROWS_AS(inject_noise(dataset.pairs, {1.0, 1}), DataError);

  std::vector<TrainingPair> one{dataset.pairs[0]};
  CHECK_THROWS_AS(inject_noise(one, {1.0, 1}), DataError);
  CHECK_THROWS_AS(inject_noise({}, {0.5, 1}), ContractViolation);
  CHECK_THROWS_AS(inject_noise(dataset.pairs, {1.5, 1}), ConfigError);
}

TEST_CASE("batches shapes and tail merging") {
  const auto b1 = batches(10, 5, 1, 0);
  REQUIRE(b1.size() == 2);
  CHECK(b1[0].size() == 5);
  CHECK(b1[1].size() == 5);

  const auto b2 = batches(11, 5, 1, 0);
  REQUIRE(b2.size() == 2);
  CHECK(b2[0].size() == 5);
  CHECK(b2[1].size() == 6);

  const auto b3 = batches(12, 5, 1, 0);
  REQUIRE(b3.size() == 3);
  CHECK(b3[2].size() == 2);

  CHECK(batches(0, 5, 1, 0).empty());
  CHECK_THROWS_AS(batches(10, 1, 1, 0), ConfigError);
  CHECK_THROWS_AS(batches(1, 5, 1, 0), ContractViolation);
}

TEST_CASE("batches partition the dataset exactly once and are seeded") {
  const int n = 103;
  const auto run1 = batches(n, 8, 42, 3);
  const auto run2 = batches(n, 8, 42, 3);
  CHECK(run1 == run2);
  const auto other_epoch = batches(n, 8, 42, 4);
  CHECK(run1 != other_epoch);

  std::set<int> seen;
  for (const auto& batch : run1) {
    for (int idx : batch) {
      CHECK(seen.insert(idx).second);
    }
  }
  CHECK(seen.size() == static_cast<std::size_t>(n));
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == n - 1);
}
