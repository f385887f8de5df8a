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

#include "npclab/loss.hpp"

#include <cmath>
#include <string>

#include "npclab/errors.hpp"

namespace npclab {

namespace {

constexpr double kProbFloor = 1e-300;

void validate_batch(const TrainingBatch& batch, std::span<const int> flags,
                    const std::vector<ProbVector>* teacher) {
  const std::size_t b = batch.query_tokens.size();
  if (b == 0) {
    throw ContractViolation("loss_and_gradients: empty batch");
  }
  if (batch.candidates.size() != b || batch.pair_ids.size() != b ||
      flags.size() != b) {
    throw ContractViolation("loss_and_gradients: inconsistent batch arity");
  }
  if (teacher != nullptr && teacher->size() != b) {
    throw ContractViolation(
        "loss_and_gradients: teacher distribution count mismatch");
  }
  for (std::size_t i = 0; i < b; ++i) {
    const CandidateSet& cand = batch.candidates[i];
    if (cand.doc_slots.size() < 2) {
      throw ContractViolation(
          "loss_and_gradients: candidate set needs at least two documents");
    }
    if (cand.positive_pos < 0 ||
        cand.positive_pos >= static_cast<int>(cand.doc_slots.size())) {
      throw ContractViolation("loss_and_gradients: positive index out of range");
    }
    for (int slot : cand.doc_slots) {
      if (slot < 0 || slot >= static_cast<int>(batch.doc_tokens.size())) {
        throw ContractViolation("loss_and_gradients: doc slot out of range");
      }
    }
    if (teacher != nullptr &&
        (*teacher)[i].size() != cand.doc_slots.size()) {
      throw ContractViolation(
          "loss_and_gradients: teacher distribution length mismatch");
    }
  }
}

struct EncodedItems {
  std::vector<EmbeddingVector> queries;
  std::vector<EmbeddingVector> docs;
  std::vector<EncodeTrace> query_traces;
  std::vector<EncodeTrace> doc_traces;
};

EncodedItems encode_batch(const TrainingBatch& batch, const ModelParams& params,
                          bool normalize, bool keep_traces) {
  EncodedItems items;
  items.queries.reserve(batch.query_tokens.size());
  items.docs.reserve(batch.doc_tokens.size());
  if (keep_traces) {
    items.query_traces.resize(batch.query_tokens.size());
    items.doc_traces.resize(batch.doc_tokens.size());
  }
  for (std::size_t i = 0; i < batch.query_tokens.size(); ++i) {
    items.queries.push_back(
        encode_traced(batch.query_tokens[i], params.query_tower, normalize,
                      keep_traces ? &items.query_traces[i] : nullptr));
  }
  const EncoderParams& doc_tower = params.doc_params();
  for (std::size_t d = 0; d < batch.doc_tokens.size(); ++d) {
    items.docs.push_back(
        encode_traced(batch.doc_tokens[d], doc_tower, normalize,
                      keep_traces ? &items.doc_traces[d] : nullptr));
  }
  return items;
}

}  // namespace

std::vector<ProbVector> candidate_distributions(const TrainingBatch& batch,
                                                const ModelParams& params,
                                                const LossConfig& config) {
  const EncodedItems items =
      encode_batch(batch, params, config.normalize(), /*keep_traces=*/false);
  std::vector<ProbVector> out;
  out.reserve(batch.candidates.size());
  for (std::size_t i = 0; i < batch.candidates.size(); ++i) {
    const CandidateSet& cand = batch.candidates[i];
    ScoreVector scores;
    scores.reserve(cand.doc_slots.size());
    for (int slot : cand.doc_slots) {
      scores.push_back(
          dot_product(items.queries[i].values, items.docs[slot].values));
    }
    out.push_back(softmax(scores, config.tau));
  }
  return out;
}

LossResult loss_and_gradients(
    const TrainingBatch& batch, const ModelParams& params,
    const std::vector<ProbVector>* teacher_distributions,
    std::span<const int> flags, const LossConfig& config) {
  validate_batch(batch, flags, teacher_distributions);
  const bool normalize = config.normalize();
  const std::size_t b = batch.query_tokens.size();
  const double inv_b = 1.0 / static_cast<double>(b);

  const EncodedItems items =
      encode_batch(batch, params, normalize, /*keep_traces=*/true);

  LossResult result;
  result.grads = GradientAccumulator::zeros_like(params);

  const int h = params.query_tower.hidden;
  std::vector<std::vector<double>> query_out_grads(
      b, std::vector<double>(h, 0.0));
  std::vector<std::vector<double>> doc_out_grads(
      batch.doc_tokens.size(), std::vector<double>(h, 0.0));

  double total_loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const CandidateSet& cand = batch.candidates[i];
    const std::size_t m = cand.doc_slots.size();

    ScoreVector scores(m);
    for (std::size_t j = 0; j < m; ++j) {
      scores[j] = config.tau * dot_product(items.queries[i].values,
                                           items.docs[cand.doc_slots[j]].values);
    }
    const double lse = log_sum_exp(scores);
    std::vector<double> log_p(m), p(m);
    for (std::size_t j = 0; j < m; ++j) {
      log_p[j] = scores[j] - lse;
      p[j] = std::exp(log_p[j]);
    }

    double loss_i = 0.0;
    std::vector<double> score_grad(m, 0.0);

    if (flags[i] != 0) {
      loss_i += -log_p[static_cast<std::size_t>(cand.positive_pos)];
      for (std::size_t j = 0; j < m; ++j) {
        score_grad[j] += p[j];
      }
      score_grad[static_cast<std::size_t>(cand.positive_pos)] -= 1.0;
    }

    if (teacher_distributions != nullptr) {
      const ProbVector& q = (*teacher_distributions)[i];
      if (config.kl_teacher_first) {
        // KL(teacher, student): gradient w.r.t. scores is p - q.
        double kl = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (q[j] > 0.0) {
            kl += q[j] * (std::log(std::max(q[j], kProbFloor)) - log_p[j]);
          }
          score_grad[j] += p[j] - q[j];
        }
        loss_i += std::max(kl, 0.0);
      } else {
        // KL(student, teacher): gradient w.r.t. score j is
        // p_j * (log p_j - log q_j - KL).
        double kl = 0.0;
        std::vector<double> log_ratio(m);
        for (std::size_t j = 0; j < m; ++j) {
          log_ratio[j] = log_p[j] - std::log(std::max(q[j], kProbFloor));
          kl += p[j] * log_ratio[j];
        }
        for (std::size_t j = 0; j < m; ++j) {
          score_grad[j] += p[j] * (log_ratio[j] - kl);
        }
        loss_i += std::max(kl, 0.0);
      }
    }

    if (!std::isfinite(loss_i)) {
      throw NumericError("loss_and_gradients: non-finite loss for pair id " +
                         std::to_string(batch.pair_ids[i]));
    }
    total_loss += loss_i;

    for (std::size_t j = 0; j < m; ++j) {
      const double coeff = score_grad[j] * config.tau * inv_b;
      if (coeff == 0.0) continue;
      const int slot = cand.doc_slots[j];
      const std::vector<double>& uq = items.queries[i].values;
      const std::vector<double>& ud = items.docs[slot].values;
      for (int k = 0; k < h; ++k) {
        query_out_grads[i][k] += coeff * ud[k];
        doc_out_grads[slot][k] += coeff * uq[k];
      }
    }
  }

  for (std::size_t i = 0; i < b; ++i) {
    backprop_encode(batch.query_tokens[i], params.query_tower,
                    items.query_traces[i], query_out_grads[i], normalize,
                    result.grads.query_tower);
  }
  EncoderParams& doc_grads = result.grads.doc_tower.has_value()
                                 ? *result.grads.doc_tower
                                 : result.grads.query_tower;
  const EncoderParams& doc_tower = params.doc_params();
  for (std::size_t d = 0; d < batch.doc_tokens.size(); ++d) {
    backprop_encode(batch.doc_tokens[d], doc_tower, items.doc_traces[d],
                    doc_out_grads[d], normalize, doc_grads);
  }

  result.loss = total_loss * inv_b;
  return result;
}

}  // namespace npclab
