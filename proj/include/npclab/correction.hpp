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

#ifndef NPCLAB_CORRECTION_HPP_
#define NPCLAB_CORRECTION_HPP_

#include <span>
#include <vector>

#include "npclab/encoder.hpp"
#include "npclab/numerics.hpp"

namespace npclab {

// Candidate documents for one query, as positions into a batch-level
// document list. The annotated positive appears exactly once, at
// doc_slots[positive_pos]; every other slot acts as a negative. A valid set
// has at least two slots.
struct CandidateSet {
  std::vector<int> doc_slots;
  int positive_pos = 0;
};

// Exponential-moving-average copy of the student parameters. Never updated
// by backpropagation; only by ema_update.
struct TeacherState {
  ModelParams params;
  double alpha = 0.999;  // momentum coefficient in [0, 1]
  long long step = 0;
};

// Teacher starts as an exact copy of the student.
TeacherState init_teacher(const ModelParams& student, double alpha);

// teacher = alpha * teacher + (1 - alpha) * student, applied entrywise once
// per training batch. Throws ContractViolation on shape mismatch.
void ema_update(TeacherState& teacher, const ModelParams& student);

// Softmax (temperature as multiplier) over the teacher's similarity scores
// between the query and the candidate documents. The result is consumed as
// a constant target: no gradient flows into the teacher.
ProbVector teacher_distribution(
    const TeacherState& teacher, std::span<const int> query_tokens,
    std::span<const std::vector<int>> candidate_doc_tokens, Similarity kind,
    double tau);

// y * (-log student[positive]) + KL(student, teacher), the per-pair loss.
// With kl_teacher_first the divergence direction is swapped (study option).
// Probabilities are floored away from zero so a log of an underflowed entry
// never evaluates log(0).
double pair_loss(std::span<const double> student_dist,
                 std::span<const double> teacher_dist, int positive_index,
                 int flag, bool kl_teacher_first = false);

}  // namespace npclab

#endif  // NPCLAB_CORRECTION_HPP_
