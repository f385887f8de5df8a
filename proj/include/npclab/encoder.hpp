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

#ifndef NPCLAB_ENCODER_HPP_
#define NPCLAB_ENCODER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "npclab/numerics.hpp"

namespace npclab {

// Token -> dense index map. Index 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr int kUnknownIndex = 0;

  Vocabulary();

  // Builds from a corpus of texts: tokens with frequency >= min_frequency,
  // assigned indices in lexicographic order starting at 1.
  static Vocabulary build(std::span<const std::string> texts,
                          int min_frequency = 1);

  int index_of(std::string_view token) const;  // kUnknownIndex if absent
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Reconstructs a vocabulary from a stored token list (element 0 must be
  // the unknown marker).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

 private:
  std::vector<std::string> tokens_;
  std::vector<std::pair<std::string, int>> index_;  // sorted for lookup
  void rebuild_index();
};

// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> split_tokens(std::string_view text);

// Token indices for a text; out-of-vocabulary tokens map to index 0 and an
// empty text yields the single unknown token.
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);

// Trainable state of one encoder tower: an embedding table, an affine
// projection, and a bias. The encoder is
//   embed(tokens) = tanh(projection * mean(embedding[token]) + bias),
// optionally L2-normalized.
struct EncoderParams {
  int vocab_size = 0;
  int hidden = 0;
  std::vector<double> embedding;   // vocab_size x hidden, row-major
  std::vector<double> projection;  // hidden x hidden, row-major
  std::vector<double> bias;        // hidden

  static EncoderParams zeros(int vocab_size, int hidden);
  // Entries uniform in [-0.1, 0.1] drawn from the given seed.
  static EncoderParams random_init(int vocab_size, int hidden,
                                   std::uint64_t seed);
};

// Query tower plus an optional separate document tower. When doc_tower is
// absent the towers share weights.
struct ModelParams {
  EncoderParams query_tower;
  std::optional<EncoderParams> doc_tower;

  bool shared() const { return !doc_tower.has_value(); }
  const EncoderParams& doc_params() const {
    return doc_tower ? *doc_tower : query_tower;
  }
};

struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;
};

// Forward intermediates kept for backpropagation.
struct EncodeTrace {
  std::vector<double> mean_embedding;  // mean of token embedding rows
  std::vector<double> activation;      // tanh output, before normalization
  std::vector<double> output;          // final embedding
  double norm = 0.0;                   // L2 norm of activation
};

// Mean of token embeddings -> affine projection -> tanh -> optional L2
// normalization. Throws ContractViolation on an out-of-range token index,
// NumericError when normalization meets a near-zero norm.
EmbeddingVector encode(std::span<const int> tokens, const EncoderParams& params,
                       bool normalize);

EmbeddingVector encode_traced(std::span<const int> tokens,
                              const EncoderParams& params, bool normalize,
                              EncodeTrace* trace);

// Per-parameter gradient sums with the same shapes as the model.
struct GradientAccumulator {
  EncoderParams query_tower;
  std::optional<EncoderParams> doc_tower;

  static GradientAccumulator zeros_like(const ModelParams& params);
  void reset();
};

// Accumulates d(loss)/d(params) for one encoded item, given the gradient of
// the loss with respect to the item's final embedding.
void backprop_encode(std::span<const int> tokens, const EncoderParams& params,
                     const EncodeTrace& trace,
                     std::span<const double> output_grad, bool normalize,
                     EncoderParams& grads);

// Entry (i, j) = similarity(queries[i], docs[j], kind).
std::vector<std::vector<double>> similarity_matrix(
    std::span<const EmbeddingVector> queries,
    std::span<const EmbeddingVector> docs, Similarity kind);

// Convenience bundle for read-only scoring paths.
struct RetrieverView {
  const Vocabulary& vocab;
  const ModelParams& params;
  Similarity kind = Similarity::kCosine;

  bool normalize() const { return kind == Similarity::kCosine; }
};

// Encodes a span of texts under the view's document tower (or query tower).
std::vector<EmbeddingVector> embed_texts(const RetrieverView& view,
                                         std::span<const std::string> texts,
                                         bool as_query);

}  // namespace npclab

#endif  // NPCLAB_ENCODER_HPP_
