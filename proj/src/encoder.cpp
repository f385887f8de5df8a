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

#include "npclab/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>

#include "npclab/errors.hpp"

namespace npclab {

namespace {
constexpr const char* kUnknownToken = "<unk>";
constexpr double kNormFloor = 1e-12;
}  // namespace

Vocabulary::Vocabulary() : tokens_{kUnknownToken} { rebuild_index(); }

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace_back(tokens_[i], static_cast<int>(i));
  }
  std::sort(index_.begin(), index_.end());
}

Vocabulary Vocabulary::build(std::span<const std::string> texts,
                             int min_frequency) {
  std::map<std::string, int> counts;
  for (const std::string& text : texts) {
    for (std::string& token : split_tokens(text)) {
      ++counts[token];
    }
  }
  Vocabulary vocab;
  for (const auto& [token, count] : counts) {
    if (count >= min_frequency) {
      vocab.tokens_.push_back(token);
    }
  }
  vocab.rebuild_index();
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kUnknownToken) {
    throw DataError("vocabulary token list must start with the unknown marker");
  }
  Vocabulary vocab;
  vocab.tokens_ = std::move(tokens);
  vocab.rebuild_index();
  return vocab;
}

int Vocabulary::index_of(std::string_view token) const {
  const auto it = std::lower_bound(
      index_.begin(), index_.end(), token,
      [](const auto& entry, std::string_view t) { return entry.first < t; });
  if (it != index_.end() && it->first == token) {
    return it->second;
  }
  return kUnknownIndex;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    out.push_back(std::move(current));
  }
  return out;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> out;
  for (const std::string& token : split_tokens(text)) {
    out.push_back(vocab.index_of(token));
  }
  if (out.empty()) {
    out.push_back(Vocabulary::kUnknownIndex);
  }
  return out;
}

EncoderParams EncoderParams::zeros(int vocab_size, int hidden) {
  EncoderParams p;
  p.vocab_size = vocab_size;
  p.hidden = hidden;
  p.embedding.assign(static_cast<std::size_t>(vocab_size) * hidden, 0.0);
  p.projection.assign(static_cast<std::size_t>(hidden) * hidden, 0.0);
  p.bias.assign(hidden, 0.0);
  return p;
}

EncoderParams EncoderParams::random_init(int vocab_size, int hidden,
                                         std::uint64_t seed) {
  EncoderParams p = zeros(vocab_size, hidden);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (double& v : p.embedding) v = dist(rng);
  for (double& v : p.projection) v = dist(rng);
  for (double& v : p.bias) v = dist(rng);
  return p;
}

EmbeddingVector encode(std::span<const int> tokens, const EncoderParams& params,
                       bool normalize) {
  return encode_traced(tokens, params, normalize, nullptr);
}

EmbeddingVector encode_traced(std::span<const int> tokens,
                              const EncoderParams& params, bool normalize,
                              EncodeTrace* trace) {
  if (tokens.empty()) {
    throw ContractViolation("encode: empty token sequence");
  }
  const int h = params.hidden;
  std::vector<double> mean(h, 0.0);
  for (int t : tokens) {
    if (t < 0 || t >= params.vocab_size) {
      throw ContractViolation("encode: token index out of range");
    }
    const double* row = params.embedding.data() +
                        static_cast<std::size_t>(t) * h;
    for (int k = 0; k < h; ++k) {
      mean[k] += row[k];
    }
  }
  const double inv_count = 1.0 / static_cast<double>(tokens.size());
  for (int k = 0; k < h; ++k) {
    mean[k] *= inv_count;
  }

  std::vector<double> activation(h);
  for (int r = 0; r < h; ++r) {
    const double* row = params.projection.data() +
                        static_cast<std::size_t>(r) * h;
    double z = params.bias[r];
    for (int c = 0; c < h; ++c) {
      z += row[c] * mean[c];
    }
    activation[r] = std::tanh(z);
  }

  EmbeddingVector out;
  out.normalized = normalize;
  double norm = l2_norm(activation);
  if (normalize) {
    if (norm < kNormFloor) {
      throw NumericError("encode: degenerate norm under normalization");
    }
    out.values.resize(h);
    for (int k = 0; k < h; ++k) {
      out.values[k] = activation[k] / norm;
    }
  } else {
    out.values = activation;
  }

  if (trace != nullptr) {
    trace->mean_embedding = std::move(mean);
    trace->activation = std::move(activation);
    trace->output = out.values;
    trace->norm = norm;
  }
  return out;
}

GradientAccumulator GradientAccumulator::zeros_like(const ModelParams& params) {
  GradientAccumulator g;
  g.query_tower = EncoderParams::zeros(params.query_tower.vocab_size,
                                       params.query_tower.hidden);
  if (params.doc_tower.has_value()) {
    g.doc_tower = EncoderParams::zeros(params.doc_tower->vocab_size,
                                       params.doc_tower->hidden);
  }
  return g;
}

void GradientAccumulator::reset() {
  std::fill(query_tower.embedding.begin(), query_tower.embedding.end(), 0.0);
  std::fill(query_tower.projection.begin(), query_tower.projection.end(), 0.0);
  std::fill(query_tower.bias.begin(), query_tower.bias.end(), 0.0);
  if (doc_tower.has_value()) {
    std::fill(doc_tower->embedding.begin(), doc_tower->embedding.end(), 0.0);
    std::fill(doc_tower->projection.begin(), doc_tower->projection.end(), 0.0);
    std::fill(doc_tower->bias.begin(), doc_tower->bias.end(), 0.0);
  }
}

void backprop_encode(std::span<const int> tokens, const EncoderParams& params,
                     const EncodeTrace& trace,
                     std::span<const double> output_grad, bool normalize,
                     EncoderParams& grads) {
  const int h = params.hidden;

  // Through normalization: u = e / |e|, du/de = (I - u u^T) / |e|.
  std::vector<double> act_grad(h);
  if (normalize) {
    double proj = 0.0;
    for (int k = 0; k < h; ++k) {
      proj += trace.output[k] * output_grad[k];
    }
    for (int k = 0; k < h; ++k) {
      act_grad[k] = (output_grad[k] - proj * trace.output[k]) / trace.norm;
    }
  } else {
    std::copy(output_grad.begin(), output_grad.end(), act_grad.begin());
  }

  // Through tanh: d tanh(z) / dz = 1 - tanh(z)^2.
  std::vector<double> z_grad(h);
  for (int k = 0; k < h; ++k) {
    z_grad[k] = act_grad[k] * (1.0 - trace.activation[k] * trace.activation[k]);
  }

  for (int r = 0; r < h; ++r) {
    grads.bias[r] += z_grad[r];
    double* grow = grads.projection.data() + static_cast<std::size_t>(r) * h;
    for (int c = 0; c < h; ++c) {
      grow[c] += z_grad[r] * trace.mean_embedding[c];
    }
  }

  std::vector<double> mean_grad(h, 0.0);
  for (int r = 0; r < h; ++r) {
    const double* prow =
        params.projection.data() + static_cast<std::size_t>(r) * h;
    for (int c = 0; c < h; ++c) {
      mean_grad[c] += prow[c] * z_grad[r];
    }
  }

  const double inv_count = 1.0 / static_cast<double>(tokens.size());
  for (int t : tokens) {
    double* erow = grads.embedding.data() + static_cast<std::size_t>(t) * h;
    for (int k = 0; k < h; ++k) {
      erow[k] += mean_grad[k] * inv_count;
    }
  }
}

std::vector<std::vector<double>> similarity_matrix(
    std::span<const EmbeddingVector> queries,
    std::span<const EmbeddingVector> docs, Similarity kind) {
  std::vector<std::vector<double>> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i].resize(docs.size());
    for (std::size_t j = 0; j < docs.size(); ++j) {
      // Normalized inputs make cosine a plain dot product.
      if (kind == Similarity::kCosine && queries[i].normalized &&
          docs[j].normalized) {
        out[i][j] = dot_product(queries[i].values, docs[j].values);
      } else {
        out[i][j] = similarity(queries[i].values, docs[j].values, kind);
      }
    }
  }
  return out;
}

std::vector<EmbeddingVector> embed_texts(const RetrieverView& view,
                                         std::span<const std::string> texts,
                                         bool as_query) {
  const EncoderParams& tower =
      as_query ? view.params.query_tower : view.params.doc_params();
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    const std::vector<int> tokens = tokenize(text, view.vocab);
    out.push_back(encode(tokens, tower, view.normalize()));
  }
  return out;
}

}  // namespace npclab
