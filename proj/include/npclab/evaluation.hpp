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

#ifndef NPCLAB_EVALUATION_HPP_
#define NPCLAB_EVALUATION_HPP_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "npclab/data.hpp"
#include "npclab/detection.hpp"
#include "npclab/encoder.hpp"

namespace npclab {

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

// Ranked lists per query, in the order queries were submitted. Scores are
// non-increasing within a list; ties break by ascending doc_id.
struct RetrievalRun {
  std::vector<std::pair<std::string, std::vector<RankedDoc>>> by_query;
};

// Indices of the top-k entries by (score descending, id ascending). Exposed
// so ranking invariances can be checked directly against raw scores.
std::vector<int> rank_top_k(std::span<const double> scores,
                            std::span<const std::string> ids, int k);

// Exact brute-force top-K retrieval over the whole collection.
// Requires K <= |collection|.
RetrievalRun retrieve(
    const RetrieverView& retriever,
    std::span<const std::pair<std::string, std::string>> queries,  // id, text
    const DocumentCollection& collection, int k);

// Fraction of queries whose gold document appears in the top k. Every query
// in the run must have a gold entry.
double recall_at_k(const RetrievalRun& run,
                   const std::map<std::string, std::string>& gold, int k);

// Mean over queries of 1/rank of the gold document, 0 when the gold is
// absent from the retrieved list. Single gold per query.
double mrr(const RetrievalRun& run,
           const std::map<std::string, std::string>& gold);

struct MetricsReport {
  std::map<int, double> recall_at;
  double mrr = 0.0;
  long long query_count = 0;
};

MetricsReport evaluate_run(const RetrievalRun& run,
                           const std::map<std::string, std::string>& gold,
                           std::span<const int> k_values);

// CSV with one row per pair: pair_id, ppl, truth_clean (empty if unknown),
// flag. Records, flags and pairs must describe the same pair ids.
void export_ppl_histogram(std::span<const PerplexityRecord> records,
                          const FlagSet& flags,
                          std::span<const TrainingPair> pairs,
                          const std::filesystem::path& path);

}  // namespace npclab

#endif  // NPCLAB_EVALUATION_HPP_
