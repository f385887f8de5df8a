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

#include "npclab/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "npclab/errors.hpp"
#include "npclab/io.hpp"

namespace npclab {

std::vector<int> rank_top_k(std::span<const double> scores,
                            std::span<const std::string> ids, int k) {
  if (scores.size() != ids.size()) {
    throw ContractViolation("rank_top_k: score/id length mismatch");
  }
  if (k < 0 || static_cast<std::size_t>(k) > scores.size()) {
    throw ConfigError("rank_top_k: k out of range");
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  const auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
  order.resize(k);
  return order;
}

RetrievalRun retrieve(
    const RetrieverView& retriever,
    std::span<const std::pair<std::string, std::string>> queries,
    const DocumentCollection& collection, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > collection.size()) {
    throw ConfigError("retrieve: K must be in [1, |collection|]");
  }
  std::vector<std::string> doc_ids, doc_texts;
  doc_ids.reserve(collection.size());
  doc_texts.reserve(collection.size());
  for (const auto& [doc_id, doc_text] : collection) {
    doc_ids.push_back(doc_id);
    doc_texts.push_back(doc_text);
  }
  const std::vector<EmbeddingVector> doc_embs =
      embed_texts(retriever, doc_texts, /*as_query=*/false);

  RetrievalRun run;
  run.by_query.reserve(queries.size());
  for (const auto& [query_id, query_text] : queries) {
    const EmbeddingVector query = embed_texts(
        retriever, std::span<const std::string>(&query_text, 1), true)[0];
    std::vector<double> scores(doc_embs.size());
    for (std::size_t j = 0; j < doc_embs.size(); ++j) {
      scores[j] = similarity(query.values, doc_embs[j].values, retriever.kind);
    }
    std::vector<RankedDoc> ranked;
    ranked.reserve(static_cast<std::size_t>(k));
    for (int idx : rank_top_k(scores, doc_ids, k)) {
      ranked.push_back({doc_ids[static_cast<std::size_t>(idx)],
                        scores[static_cast<std::size_t>(idx)]});
    }
    run.by_query.emplace_back(query_id, std::move(ranked));
  }
  return run;
}

namespace {

// 1-based rank of the gold document in the list, 0 if absent.
int gold_rank(const std::vector<RankedDoc>& ranked, const std::string& gold) {
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (ranked[r].doc_id == gold) {
      return static_cast<int>(r) + 1;
    }
  }
  return 0;
}

const std::string& gold_for(const std::map<std::string, std::string>& gold,
                            const std::string& query_id) {
  const auto it = gold.find(query_id);
  if (it == gold.end()) {
    throw ContractViolation("missing gold document for query '" + query_id +
                            "'");
  }
  return it->second;
}

}  // namespace

double recall_at_k(const RetrievalRun& run,
                   const std::map<std::string, std::string>& gold, int k) {
  if (run.by_query.empty()) {
    throw ContractViolation("recall_at_k: empty run");
  }
  long long hits = 0;
  for (const auto& [query_id, ranked] : run.by_query) {
    const int rank = gold_rank(ranked, gold_for(gold, query_id));
    if (rank > 0 && rank <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(run.by_query.size());
}

double mrr(const RetrievalRun& run,
           const std::map<std::string, std::string>& gold) {
  if (run.by_query.empty()) {
    throw ContractViolation("mrr: empty run");
  }
  double sum = 0.0;
  for (const auto& [query_id, ranked] : run.by_query) {
    const int rank = gold_rank(ranked, gold_for(gold, query_id));
    if (rank > 0) sum += 1.0 / static_cast<double>(rank);
  }
  return sum / static_cast<double>(run.by_query.size());
}

MetricsReport evaluate_run(const RetrievalRun& run,
                           const std::map<std::string, std::string>& gold,
                           std::span<const int> k_values) {
  MetricsReport report;
  report.query_count = static_cast<long long>(run.by_query.size());
  for (int k : k_values) {
    report.recall_at[k] = recall_at_k(run, gold, k);
  }
  report.mrr = mrr(run, gold);
  return report;
}

void export_ppl_histogram(std::span<const PerplexityRecord> records,
                          const FlagSet& flags,
                          std::span<const TrainingPair> pairs,
                          const std::filesystem::path& path) {
  std::unordered_map<long long, const TrainingPair*> by_id;
  by_id.reserve(pairs.size());
  for (const TrainingPair& pair : pairs) {
    by_id[pair.pair_id] = &pair;
  }
  std::string out = "pair_id,ppl,truth_clean,flag\n";
  char buf[64];
  for (const PerplexityRecord& r : records) {
    const auto it = by_id.find(r.pair_id);
    if (it == by_id.end()) {
      throw ContractViolation("export_ppl_histogram: unknown pair id " +
                              std::to_string(r.pair_id));
    }
    std::snprintf(buf, sizeof(buf), "%.17g", r.ppl);
    out += std::to_string(r.pair_id);
    out += ',';
    out += buf;
    out += ',';
    if (it->second->truth_clean.has_value()) {
      out += *it->second->truth_clean ? '1' : '0';
    }
    out += ',';
    out += std::to_string(flags.for_pair(r.pair_id).flag);
    out += '\n';
  }
  atomic_write_text_file(path, out);
}

}  // namespace npclab
