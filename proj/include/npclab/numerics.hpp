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

#ifndef NPCLAB_NUMERICS_HPP_
#define NPCLAB_NUMERICS_HPP_

#include <span>
#include <string_view>
#include <vector>

namespace npclab {

// Similarity function used to score a query embedding against a document
// embedding. Cosine requires nonzero vectors; inner product is unbounded.
enum class Similarity {
  kCosine,
  kInnerProduct,
};

// A sequence of raw similarity logits. Entries must be finite.
using ScoreVector = std::vector<double>;

// A discrete probability distribution: entries >= 0 summing to 1.
using ProbVector = std::vector<double>;

// log(sum_i exp(scores[i])) computed with a max shift so that inputs with
// |s| up to 1e6 never overflow. Exact for singletons.
// Throws ContractViolation on an empty or non-finite input.
double log_sum_exp(std::span<const double> scores);

// Softmax with the temperature applied as a score multiplier:
//   out[j] = exp(t * s[j]) / sum_k exp(t * s[k]).
// Throws ConfigError if temperature <= 0, ContractViolation on bad scores.
ProbVector softmax(std::span<const double> scores, double temperature);

// sum_i p[i] * ln(p[i] / q[i]) with the convention 0 * ln 0 = 0.
// Throws ContractViolation on length mismatch or q[i] = 0 where p[i] > 0.
// The result is clamped at 0 to absorb rounding on near-identical inputs.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// similarity(u, v, kind). Cosine throws ContractViolation on a zero vector.
double similarity(std::span<const double> u, std::span<const double> v,
                  Similarity kind);

double dot_product(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);

const char* similarity_name(Similarity kind);

// Parses "cosine" / "inner_product"; throws ConfigError otherwise.
Similarity similarity_from_name(std::string_view name);

}  // namespace npclab

#endif  // NPCLAB_NUMERICS_HPP_
