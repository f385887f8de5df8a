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

#include "npclab/correction.hpp"

#include <algorithm>
#include <cmath>

#include "npclab/errors.hpp"

namespace npclab {

namespace {

constexpr double kProbFloor = 1e-300;

void ema_tensor(std::vector<double>& teacher, const std::vector<double>& student,
                double alpha) {
  if (teacher.size() != student.size()) {
    throw ContractViolation("ema_update: shape mismatch");
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    teacher[i] = alpha * teacher[i] + (1.0 - alpha) * student[i];
  }
}

void ema_tower(EncoderParams& teacher, const EncoderParams& student,
               double alpha) {
  if (teacher.vocab_size != student.vocab_size ||
      teacher.hidden != student.hidden) {
    throw ContractViolation("ema_update: tower shape mismatch");
  }
  ema_tensor(teacher.embedding, student.embedding, alpha);
  ema_tensor(teacher.projection, student.projection, alpha);
  ema_tensor(teacher.bias, student.bias, alpha);
}

}  // namespace

TeacherState init_teacher(const ModelParams& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("init_teacher: alpha must be in [0, 1]");
  }
  TeacherState teacher;
  teacher.params = student;
  teacher.alpha = alpha;
  teacher.step = 0;
  return teacher;
}

void ema_update(TeacherState& teacher, const ModelParams& student) {
  if (teacher.params.shared() != student.shared()) {
    throw ContractViolation("ema_update: tower layout mismatch");
  }
  ema_tower(teacher.params.query_tower, student.query_tower, teacher.alpha);
  if (teacher.params.doc_tower.has_value()) {
    ema_tower(*teacher.params.doc_tower, *student.doc_tower, teacher.alpha);
  }
  ++teacher.step;
}

ProbVector teacher_distribution(
    const TeacherState& teacher, std::span<const int> query_tokens,
    std::span<const std::vector<int>> candidate_doc_tokens, Similarity kind,
    double tau) {
  const bool normalize = kind == Similarity::kCosine;
  const EmbeddingVector query =
      encode(query_tokens, teacher.params.query_tower, normalize);
  ScoreVector scores;
  scores.reserve(candidate_doc_tokens.size());
  const EncoderParams& doc_tower = teacher.params.doc_params();
  for (const std::vector<int>& doc_tokens : candidate_doc_tokens) {
    const EmbeddingVector doc = encode(doc_tokens, doc_tower, normalize);
    scores.push_back(dot_product(query.values, doc.values));
  }
  return softmax(scores, tau);
}

double pair_loss(std::span<const double> student_dist,
                 std::span<const double> teacher_dist, int positive_index,
                 int flag, bool kl_teacher_first) {
  if (student_dist.size() != teacher_dist.size()) {
    throw ContractViolation("pair_loss: distribution length mismatch");
  }
  if (positive_index < 0 ||
      positive_index >= static_cast<int>(student_dist.size())) {
    throw ContractViolation("pair_loss: positive index out of range");
  }
  double loss = 0.0;
  if (flag != 0) {
    loss -= std::log(
        std::max(student_dist[static_cast<std::size_t>(positive_index)],
                 kProbFloor));
  }
  const std::span<const double>& p =
      kl_teacher_first ? teacher_dist : student_dist;
  const std::span<const double>& q =
      kl_teacher_first ? student_dist : teacher_dist;
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) {
      kl += p[j] * (std::log(p[j]) - std::log(std::max(q[j], kProbFloor)));
    }
  }
  loss += std::max(kl, 0.0);
  return loss;
}

}  // namespace npclab
