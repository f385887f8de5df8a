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

#ifndef NPCLAB_LOSS_HPP_
#define NPCLAB_LOSS_HPP_

#include <span>
#include <vector>

#include "npclab/correction.hpp"
#include "npclab/encoder.hpp"
#include "npclab/numerics.hpp"

namespace npclab {

struct LossConfig {
  Similarity kind = Similarity::kCosine;
  double tau = 20.0;
  bool kl_teacher_first = false;

  bool normalize() const { return kind == Similarity::kCosine; }
};

// One tokenized training batch: B queries, a deduplicated document list, and
// a candidate set per query referencing that list.
struct TrainingBatch {
  std::vector<std::vector<int>> query_tokens;   // B entries
  std::vector<std::vector<int>> doc_tokens;     // unique documents
  std::vector<CandidateSet> candidates;         // B entries
  std::vector<long long> pair_ids;              // B entries, for diagnostics
};

struct LossResult {
  double loss = 0.0;
  GradientAccumulator grads;
};

// Mean over queries of  flag * L_contrastive + L_consistency,  with exact
// analytic gradients for every parameter. teacher_distributions may be null
// (no consistency term, the warmup regime); when present it holds one
// distribution per query over that query's candidate slots, treated as a
// constant. Log-probabilities are derived directly from the score
// log-sum-exp, so no path evaluates log(0). A NaN in the forward pass
// raises NumericError naming the offending pair id.
LossResult loss_and_gradients(
    const TrainingBatch& batch, const ModelParams& params,
    const std::vector<ProbVector>* teacher_distributions,
    std::span<const int> flags, const LossConfig& config);

// Student-side candidate distributions for a batch (softmax over scores),
// reused for teacher targets by evaluating under the teacher's parameters.
std::vector<ProbVector> candidate_distributions(const TrainingBatch& batch,
                                                const ModelParams& params,
                                                const LossConfig& config);

}  // namespace npclab

#endif  // NPCLAB_LOSS_HPP_
