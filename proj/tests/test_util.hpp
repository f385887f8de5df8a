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

#ifndef NPCLAB_TESTS_TEST_UTIL_HPP_
#define NPCLAB_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "npclab/loss.hpp"
#include "npclab/rng.hpp"

namespace npclab::testutil {

// One randomized tiny loss instance (B=2, h=4, V=10) rotating through flag
// values, teacher presence, similarity kinds and tower sharing.
struct GradCheckCase {
  TrainingBatch batch;
  ModelParams params;
  std::optional<std::vector<ProbVector>> teacher;
  std::vector<int> flags;
  LossConfig config;
};

inline EncoderParams random_tower(int vocab, int hidden, std::uint64_t seed,
                                  double scale) {
  EncoderParams p = EncoderParams::zeros(vocab, hidden);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : p.embedding) v = dist(rng);
  for (double& v : p.projection) v = dist(rng);
  for (double& v : p.bias) v = dist(rng);
  return p;
}

inline GradCheckCase random_grad_case(std::uint64_t seed) {
  GradCheckCase out;
  std::mt19937_64 rng(splitmix64(seed));
  const int vocab = 10;
  const int hidden = 4;
  const bool cosine = (seed % 2) == 0;
  const bool with_teacher = (seed / 2 % 2) == 0;
  const bool shared = (seed / 4 % 2) == 0;

  out.config.kind = cosine ? Similarity::kCosine : Similarity::kInnerProduct;
  out.config.tau = cosine ? 20.0 : 1.0;

  out.params.query_tower = random_tower(vocab, hidden, rng(), 0.8);
  if (!shared) {
    out.params.doc_tower = random_tower(vocab, hidden, rng(), 0.8);
  }

  std::uniform_int_distribution<int> token(0, vocab - 1);
  std::uniform_int_distribution<int> length(1, 4);
  auto random_tokens = [&]() {
    std::vector<int> tokens(length(rng));
    for (int& t : tokens) t = token(rng);
    return tokens;
  };

  const int batch_size = 2;
  const int num_docs = 3;  // two positives plus one extra negative
  for (int d = 0; d < num_docs; ++d) {
    out.batch.doc_tokens.push_back(random_tokens());
  }
  std::uniform_int_distribution<int> flag(0, 1);
  for (int i = 0; i < batch_size; ++i) {
    out.batch.query_tokens.push_back(random_tokens());
    out.batch.pair_ids.push_back(i);
    CandidateSet cand;
    cand.doc_slots = {0, 1, 2};
    cand.positive_pos = i;
    out.batch.candidates.push_back(cand);
    out.flags.push_back(flag(rng));
  }

  if (with_teacher) {
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::vector<ProbVector> teacher;
    for (int i = 0; i < batch_size; ++i) {
      ProbVector dist(num_docs);
      double sum = 0.0;
      for (double& v : dist) {
        v = unit(rng);
        sum += v;
      }
      for (double& v : dist) v /= sum;
      teacher.push_back(dist);
    }
    out.teacher = teacher;
  } else {
    // Without a consistency term an all-zero flag vector has zero loss
    // everywhere; keep at least one contrastive path active.
    out.flags[0] = 1;
  }
  return out;
}

inline std::vector<std::vector<double>*> model_tensors(ModelParams& params) {
  std::vector<std::vector<double>*> out{&params.query_tower.embedding,
                                        &params.query_tower.projection,
                                        &params.query_tower.bias};
  if (params.doc_tower.has_value()) {
    out.push_back(&params.doc_tower->embedding);
    out.push_back(&params.doc_tower->projection);
    out.push_back(&params.doc_tower->bias);
  }
  return out;
}

inline double case_loss(const GradCheckCase& c) {
  return loss_and_gradients(c.batch, c.params,
                            c.teacher ? &*c.teacher : nullptr, c.flags,
                            c.config)
      .loss;
}

// Max relative error between analytic gradients and central finite
// differences over every parameter entry.
inline double max_grad_rel_error(GradCheckCase c, double step) {
  const LossResult analytic = loss_and_gradients(
      c.batch, c.params, c.teacher ? &*c.teacher : nullptr, c.flags, c.config);

  GradientAccumulator grads = analytic.grads;
  std::vector<std::vector<double>*> grad_tensors{&grads.query_tower.embedding,
                                                 &grads.query_tower.projection,
                                                 &grads.query_tower.bias};
  if (grads.doc_tower.has_value()) {
    grad_tensors.push_back(&grads.doc_tower->embedding);
    grad_tensors.push_back(&grads.doc_tower->projection);
    grad_tensors.push_back(&grads.doc_tower->bias);
  }
  const std::vector<std::vector<double>*> param_tensors =
      model_tensors(c.params);

  double max_rel = 0.0;
  for (std::size_t t = 0; t < param_tensors.size(); ++t) {
    std::vector<double>& tensor = *param_tensors[t];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + step;
      const double up = case_loss(c);
      tensor[i] = saved - step;
      const double down = case_loss(c);
      tensor[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = (*grad_tensors[t])[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

// Plain direct-space EM reference for a two-component 1-D Gaussian mixture,
// deliberately written without the library's numerics helpers.
struct ReferenceGmm {
  double weights[2], means[2], variances[2];
};

inline ReferenceGmm reference_em(const std::vector<double>& x, double mu0,
                                 double mu1, int iters) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);

  ReferenceGmm fit{{0.5, 0.5}, {mu0, mu1}, {var, var}};
  std::vector<double> r(n);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      auto dens = [&](int k) {
        return fit.weights[k] /
               std::sqrt(2.0 * 3.14159265358979323846 * fit.variances[k]) *
               std::exp(-(x[i] - fit.means[k]) * (x[i] - fit.means[k]) /
                        (2.0 * fit.variances[k]));
      };
      const double d0 = dens(0), d1 = dens(1);
      r[i] = d0 / (d0 + d1);
    }
    double n0 = 0.0, s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n0 += r[i];
      s0 += r[i] * x[i];
      s1 += (1.0 - r[i]) * x[i];
    }
    const double n1 = static_cast<double>(n) - n0;
    fit.means[0] = s0 / n0;
    fit.means[1] = s1 / n1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v0 += r[i] * (x[i] - fit.means[0]) * (x[i] - fit.means[0]);
      v1 += (1.0 - r[i]) * (x[i] - fit.means[1]) * (x[i] - fit.means[1]);
    }
    fit.variances[0] = std::max(v0 / n0, 1e-6);
    fit.variances[1] = std::max(v1 / n1, 1e-6);
    fit.weights[0] = n0 / static_cast<double>(n);
    fit.weights[1] = n1 / static_cast<double>(n);
  }
  return fit;
}

}  // namespace npclab::testutil

#endif  // NPCLAB_TESTS_TEST_UTIL_HPP_
