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

#include "npclab/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "npclab/errors.hpp"

namespace npclab {

namespace {

double log_gaussian(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) +
                 d * d / variance);
}

double percentile(std::vector<double> sorted, double q) {
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t idx =
      static_cast<std::size_t>(std::llround(std::floor(pos + 0.5)));
  return sorted[std::min(idx, n - 1)];
}

}  // namespace

long long FlagSet::clean_count() const {
  long long n = 0;
  for (const FlagRecord& r : records) n += r.flag != 0 ? 1 : 0;
  return n;
}

long long FlagSet::noisy_count() const {
  return static_cast<long long>(records.size()) - clean_count();
}

void FlagSet::build_index() {
  index_.clear();
  index_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    index_[records[i].pair_id] = i;
  }
}

const FlagRecord& FlagSet::for_pair(long long pair_id) const {
  const auto it = index_.find(pair_id);
  if (it == index_.end()) {
    throw ContractViolation("FlagSet: no flag for pair id " +
                            std::to_string(pair_id));
  }
  return records[it->second];
}

double pair_perplexity(const EmbeddingVector& query,
                       const EmbeddingVector& positive,
                       std::span<const EmbeddingVector> negatives,
                       Similarity kind, double tau) {
  if (negatives.empty()) {
    throw ContractViolation("pair_perplexity: at least one negative required");
  }
  ScoreVector scaled;
  scaled.reserve(negatives.size() + 1);
  const double positive_score =
      tau * similarity(query.values, positive.values, kind);
  scaled.push_back(positive_score);
  for (const EmbeddingVector& neg : negatives) {
    scaled.push_back(tau * similarity(query.values, neg.values, kind));
  }
  return log_sum_exp(scaled) - positive_score;
}

std::vector<PerplexityRecord> compute_perplexities(
    const RetrieverView& retriever, std::span<const TrainingPair> pairs,
    int batch_size, double tau, std::uint64_t seed, int epoch) {
  const std::vector<std::vector<int>> index_batches =
      batches(static_cast<int>(pairs.size()), batch_size, seed, epoch);

  std::vector<PerplexityRecord> records;
  records.reserve(pairs.size());
  const bool normalize = retriever.normalize();
  for (const std::vector<int>& batch : index_batches) {
    if (batch.size() < 2) {
      throw ContractViolation("compute_perplexities: batch of size 1");
    }
    std::vector<EmbeddingVector> queries, docs;
    queries.reserve(batch.size());
    docs.reserve(batch.size());
    for (int idx : batch) {
      const TrainingPair& pair = pairs[static_cast<std::size_t>(idx)];
      queries.push_back(encode(tokenize(pair.query_text, retriever.vocab),
                               retriever.params.query_tower, normalize));
      docs.push_back(encode(tokenize(pair.doc_text, retriever.vocab),
                            retriever.params.doc_params(), normalize));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ScoreVector scaled;
      scaled.reserve(batch.size());
      const double positive_score =
          tau * similarity(queries[i].values, docs[i].values, retriever.kind);
      scaled.push_back(positive_score);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i) continue;
        scaled.push_back(tau * similarity(queries[i].values, docs[j].values,
                                          retriever.kind));
      }
      const double ppl = log_sum_exp(scaled) - positive_score;
      records.push_back(
          {pairs[static_cast<std::size_t>(batch[i])].pair_id, ppl});
    }
  }
  std::sort(records.begin(), records.end(),
            [](const PerplexityRecord& a, const PerplexityRecord& b) {
              return a.pair_id < b.pair_id;
            });
  return records;
}

GmmFit fit_gmm(std::span<const PerplexityRecord> records, int max_iters,
               double tol, std::uint64_t /*seed*/) {
  const std::size_t n = records.size();
  if (n < 2) {
    throw ContractViolation("fit_gmm: need at least two records");
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = records[i].ppl;

  const auto [min_it, max_it] = std::minmax_element(x.begin(), x.end());
  if (*min_it == *max_it) {
    throw DegenerateInputError("fit_gmm: all values identical");
  }

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double variance = 0.0;
  for (double v : x) variance += (v - mean) * (v - mean);
  variance /= static_cast<double>(n);
  variance = std::max(variance, kVarianceFloor);

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());

  GmmFit fit;
  fit.weights = {0.5, 0.5};
  fit.means = {percentile(sorted, 0.10), percentile(sorted, 0.90)};
  fit.variances = {variance, variance};
  fit.sample_std = std::sqrt(variance);

  std::vector<double> resp0(n);
  double previous_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    // E step: responsibilities and the mean log-likelihood in one pass.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double l0 = std::log(fit.weights[0]) +
                        log_gaussian(x[i], fit.means[0], fit.variances[0]);
      const double l1 = std::log(fit.weights[1]) +
                        log_gaussian(x[i], fit.means[1], fit.variances[1]);
      const double m = std::max(l0, l1);
      const double denom = std::exp(l0 - m) + std::exp(l1 - m);
      resp0[i] = std::exp(l0 - m) / denom;
      ll += m + std::log(denom);
    }
    ll /= static_cast<double>(n);
    fit.log_likelihood.push_back(ll);
    fit.iterations = iter + 1;
    if (ll - previous_ll < tol && iter > 0) {
      break;
    }
    previous_ll = ll;

    // M step.
    double n0 = 0.0, sum0 = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n0 += resp0[i];
      sum0 += resp0[i] * x[i];
      sum1 += (1.0 - resp0[i]) * x[i];
    }
    const double n1 = static_cast<double>(n) - n0;
    // A vanished component keeps its previous parameters.
    if (n0 > 0.0) fit.means[0] = sum0 / n0;
    if (n1 > 0.0) fit.means[1] = sum1 / n1;
    double var0 = 0.0, var1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d0 = x[i] - fit.means[0];
      const double d1 = x[i] - fit.means[1];
      var0 += resp0[i] * d0 * d0;
      var1 += (1.0 - resp0[i]) * d1 * d1;
    }
    if (n0 > 0.0) fit.variances[0] = std::max(var0 / n0, kVarianceFloor);
    if (n1 > 0.0) fit.variances[1] = std::max(var1 / n1, kVarianceFloor);
    fit.weights[0] = n0 / static_cast<double>(n);
    fit.weights[1] = n1 / static_cast<double>(n);
  }

  fit.clean_component = fit.means[1] < fit.means[0] ? 1 : 0;
  fit.degenerate =
      std::abs(fit.means[0] - fit.means[1]) < 0.05 * fit.sample_std ||
      std::min(fit.weights[0], fit.weights[1]) < 1e-3;
  return fit;
}

double posterior_clean(const GmmFit& fit, double ppl) {
  const int c = fit.clean_component;
  const int o = 1 - c;
  const double lc = std::log(std::max(fit.weights[c], 1e-300)) +
                    log_gaussian(ppl, fit.means[c], fit.variances[c]);
  const double lo = std::log(std::max(fit.weights[o], 1e-300)) +
                    log_gaussian(ppl, fit.means[o], fit.variances[o]);
  const double m = std::max(lc, lo);
  return std::exp(lc - m) / (std::exp(lc - m) + std::exp(lo - m));
}

FlagSet estimate_flags(const GmmFit& fit,
                       std::span<const PerplexityRecord> records,
                       double lambda, int epoch) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("estimate_flags: lambda must be in (0, 1)");
  }
  FlagSet flags;
  flags.epoch = epoch;
  flags.records.reserve(records.size());
  for (const PerplexityRecord& r : records) {
    const double posterior = posterior_clean(fit, r.ppl);
    const int flag = fit.degenerate ? 1 : (posterior > lambda ? 1 : 0);
    flags.records.push_back({r.pair_id, flag, posterior});
  }
  flags.build_index();
  return flags;
}

FlagSet all_clean_flags(std::span<const PerplexityRecord> records, int epoch) {
  FlagSet flags;
  flags.epoch = epoch;
  flags.records.reserve(records.size());
  for (const PerplexityRecord& r : records) {
    flags.records.push_back({r.pair_id, 1, 1.0});
  }
  flags.build_index();
  return flags;
}

DetectionMetrics detection_report(const FlagSet& flags,
                                  std::span<const TrainingPair> pairs) {
  DetectionMetrics m;
  for (const TrainingPair& pair : pairs) {
    if (!pair.truth_clean.has_value()) {
      throw ContractViolation("detection_report: missing truth label for '" +
                              pair.query_id + "'");
    }
    const bool truly_noisy = !*pair.truth_clean;
    const bool predicted_noisy = flags.for_pair(pair.pair_id).flag == 0;
    if (truly_noisy && predicted_noisy) ++m.true_positive;
    if (!truly_noisy && predicted_noisy) ++m.false_positive;
    if (truly_noisy && !predicted_noisy) ++m.false_negative;
    if (!truly_noisy && !predicted_noisy) ++m.true_negative;
  }
  const long long predicted = m.true_positive + m.false_positive;
  const long long actual_noise = m.true_positive + m.false_negative;
  const long long actual_clean = m.true_negative + m.false_positive;
  m.precision = predicted > 0
                    ? static_cast<double>(m.true_positive) /
                          static_cast<double>(predicted)
                    : (actual_noise == 0 ? 1.0 : 0.0);
  m.recall = actual_noise > 0 ? static_cast<double>(m.true_positive) /
                                    static_cast<double>(actual_noise)
                              : 1.0;
  const double clean_recall =
      actual_clean > 0 ? static_cast<double>(m.true_negative) /
                             static_cast<double>(actual_clean)
                       : 1.0;
  m.balanced_accuracy = 0.5 * (m.recall + clean_recall);
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

}  // namespace npclab
