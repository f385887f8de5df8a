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

#include "npclab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "npclab/errors.hpp"

namespace npclab {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ContractViolation(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace

double log_sum_exp(std::span<const double> scores) {
  if (scores.empty()) {
    throw ContractViolation("log_sum_exp: empty input");
  }
  require_finite(scores, "log_sum_exp");
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) {
    sum += std::exp(s - m);
  }
  return m + std::log(sum);
}

ProbVector softmax(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("softmax: temperature must be > 0");
  }
  if (scores.empty()) {
    throw ContractViolation("softmax: empty input");
  }
  require_finite(scores, "softmax");

  ProbVector scaled(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    scaled[j] = temperature * scores[j];
  }
  const double lse = log_sum_exp(scaled);
  ProbVector out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = std::exp(scaled[j] - lse);
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ContractViolation("kl_divergence: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) {
      throw ContractViolation("kl_divergence: negative entry");
    }
    if (p[i] > 0.0) {
      if (q[i] == 0.0) {
        throw ContractViolation("kl_divergence: q is 0 where p > 0");
      }
      sum += p[i] * (std::log(p[i]) - std::log(q[i]));
    }
  }
  return std::max(sum, 0.0);
}

double dot_product(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ContractViolation("dot_product: dimension mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    sum += u[i] * v[i];
  }
  return sum;
}

double l2_norm(std::span<const double> v) {
  return std::sqrt(dot_product(v, v));
}

double similarity(std::span<const double> u, std::span<const double> v,
                  Similarity kind) {
  if (u.size() != v.size()) {
    throw ContractViolation("similarity: dimension mismatch");
  }
  switch (kind) {
    case Similarity::kInnerProduct:
      return dot_product(u, v);
    case Similarity::kCosine: {
      const double nu = l2_norm(u);
      const double nv = l2_norm(v);
      if (nu == 0.0 || nv == 0.0) {
        throw ContractViolation("similarity: zero vector under cosine");
      }
      return dot_product(u, v) / (nu * nv);
    }
  }
  throw ContractViolation("similarity: unknown kind");
}

const char* similarity_name(Similarity kind) {
  return kind == Similarity::kCosine ? "cosine" : "inner_product";
}

Similarity similarity_from_name(std::string_view name) {
  if (name == "cosine") return Similarity::kCosine;
  if (name == "inner_product") return Similarity::kInnerProduct;
  throw ConfigError("unknown similarity kind: " + std::string(name));
}

}  // namespace npclab
