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

#ifndef NPCLAB_DETECTION_HPP_
#define NPCLAB_DETECTION_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "npclab/data.hpp"
#include "npclab/encoder.hpp"

namespace npclab {

struct PerplexityRecord {
  long long pair_id = 0;
  double ppl = 0.0;  // finite, >= 0
};

// Two-component Gaussian mixture over per-pair perplexities, fit by EM.
struct GmmFit {
  std::array<double, 2> weights{};    // sum to 1
  std::array<double, 2> means{};
  std::array<double, 2> variances{};  // floored at kVarianceFloor
  int clean_component = 0;            // index of the lower-mean component
  std::vector<double> log_likelihood;  // mean log-likelihood per EM iteration
  int iterations = 0;
  double sample_std = 0.0;
  // Collapsed mixture: component means closer than 5% of the sample spread
  // or a vanishing weight. Flag estimation treats every pair as clean.
  bool degenerate = false;
};

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr int kGmmMaxIters = 200;
inline constexpr double kGmmTolerance = 1e-9;

struct FlagRecord {
  long long pair_id = 0;
  int flag = 1;            // 1 = estimated clean, 0 = estimated noisy
  double posterior = 1.0;  // posterior of the clean component
};

// Per-epoch clean flags, one per training pair.
struct FlagSet {
  int epoch = 0;
  std::vector<FlagRecord> records;

  long long clean_count() const;
  long long noisy_count() const;
  const FlagRecord& for_pair(long long pair_id) const;
  void build_index();

 private:
  std::unordered_map<long long, std::size_t> index_;
};

// -log( exp(t*f(q,d+)) / (exp(t*f(q,d+)) + sum_j exp(t*f(q,d_j^-))) ),
// computed through log_sum_exp. Equals the pair's contrastive loss value.
// Requires at least one negative.
double pair_perplexity(const EmbeddingVector& query,
                       const EmbeddingVector& positive,
                       std::span<const EmbeddingVector> negatives,
                       Similarity kind, double tau);

// One record per pair. Negatives for a pair are the other documents of its
// epoch-seeded batch; this path never sees mined hard negatives. Throws
// ContractViolation when a batch of size 1 would arise.
std::vector<PerplexityRecord> compute_perplexities(
    const RetrieverView& retriever, std::span<const TrainingPair> pairs,
    int batch_size, double tau, std::uint64_t seed, int epoch);

// Standard 1-D EM with deterministic initialization (means at the 10th and
// 90th percentiles, equal weights, shared sample variance). Stops when the
// mean log-likelihood improves by less than tol or after max_iters. Throws
// DegenerateInputError when all values are identical; callers then treat
// every pair as clean. The seed parameter is reserved; the fit is fully
// deterministic.
GmmFit fit_gmm(std::span<const PerplexityRecord> records, int max_iters,
               double tol, std::uint64_t seed);

// Posterior probability of the clean (lower-mean) component, in log space.
double posterior_clean(const GmmFit& fit, double ppl);

// flag = 1 iff posterior_clean(fit, ppl) > lambda (strict). A degenerate
// fit yields all-clean flags.
FlagSet estimate_flags(const GmmFit& fit,
                       std::span<const PerplexityRecord> records,
                       double lambda, int epoch);

// All-clean flag set, used when the mixture cannot be fit at all.
FlagSet all_clean_flags(std::span<const PerplexityRecord> records, int epoch);

// Confusion metrics with noise as the positive class (truth_clean == false,
// predicted noisy == flag 0). Empty-class recalls count as perfect.
struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double balanced_accuracy = 0.0;
  long long true_positive = 0;
  long long false_positive = 0;
  long long true_negative = 0;
  long long false_negative = 0;
};

// Requires truth_clean on every pair.
DetectionMetrics detection_report(const FlagSet& flags,
                                  std::span<const TrainingPair> pairs);

}  // namespace npclab

#endif  // NPCLAB_DETECTION_HPP_
