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

#ifndef NPCLAB_TRAINING_HPP_
#define NPCLAB_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "npclab/correction.hpp"
#include "npclab/data.hpp"
#include "npclab/detection.hpp"
#include "npclab/encoder.hpp"
#include "npclab/evaluation.hpp"
#include "npclab/loss.hpp"

namespace npclab {

enum class TrainMethod { kBaseline, kNpc };
enum class NegativeMode { kInBatch, kHard };

TrainMethod train_method_from_name(std::string_view name);
NegativeMode negative_mode_from_name(std::string_view name);
const char* train_method_name(TrainMethod method);
const char* negative_mode_name(NegativeMode mode);

struct AdamConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  TrainMethod method = TrainMethod::kNpc;
  NegativeMode negatives = NegativeMode::kInBatch;
  double tau = 20.0;
  double lambda = 0.5;   // clean-flag posterior threshold
  double alpha = 0.999;  // EMA momentum
  int batch_size = 64;
  int warmup_epochs = 3;
  int total_epochs = 15;
  AdamConfig adam;
  int hard_negatives_per_query = 1;
  Similarity similarity = Similarity::kCosine;
  std::uint64_t seed = 1;
  int hidden_dim = 64;
  bool shared_towers = true;
  // Study option: swap the argument order of the consistency divergence.
  bool kl_teacher_first = false;
  // Detect once after warmup and reuse that flag set for every later epoch.
  bool fixed_flags = false;
  int detection_batch_size = 0;  // 0 means batch_size
  bool remine_each_epoch = true;
  double grad_clip_norm = 5.0;  // global norm; 0 disables clipping
  std::vector<int> eval_k = {1, 5, 20};
  int retrieval_cutoff = 100;

  void validate() const;
  LossConfig loss_config() const {
    return LossConfig{similarity, tau, kl_teacher_first};
  }
  int detection_batch() const {
    return detection_batch_size > 0 ? detection_batch_size : batch_size;
  }
};

// pair_id -> mined negative doc ids. Mined ids never equal the pair's own
// annotated positive id. Consumed only by training batch assembly, never by
// the detection path.
struct HardNegativeStore {
  std::unordered_map<long long, std::vector<std::string>> by_pair;
  bool empty() const { return by_pair.empty(); }
};

struct OptimizerState {
  GradientAccumulator first_moment;
  GradientAccumulator second_moment;
  long long step = 0;

  static OptimizerState zeros_like(const ModelParams& params);
};

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm. max_norm <= 0 disables clipping.
double clip_gradients(GradientAccumulator& grads, double max_norm);

void adam_step(ModelParams& params, const GradientAccumulator& grads,
               OptimizerState& state, const AdamConfig& config);

// Builds the per-batch document list (deduplicated by doc_id: annotated
// positives first, then mined hard negatives) and one candidate set per
// query spanning every document in the batch.
TrainingBatch assemble_batch(std::span<const TrainingPair> pairs,
                             std::span<const int> indices,
                             const Vocabulary& vocab,
                             const HardNegativeStore* store,
                             const DocumentCollection* collection);

// Fresh parameters for the configured model shape, drawn from the run seed.
ModelParams init_model(const TrainConfig& config, int vocab_size);

Vocabulary build_vocabulary(std::span<const TrainingPair> pairs,
                            const DocumentCollection& collection);

struct EpochStats {
  double mean_loss = 0.0;
  long long batches = 0;
};

// One pass over the training pairs: per batch, assemble candidates, compute
// teacher targets when a teacher is present, take one optimizer step on the
// combined loss, then one EMA step. flags == nullptr means all-clean.
EpochStats train_epoch(ModelParams& params,
                       std::optional<TeacherState>& teacher,
                       const Vocabulary& vocab,
                       std::span<const TrainingPair> pairs,
                       const FlagSet* flags, const HardNegativeStore* store,
                       const DocumentCollection* collection,
                       OptimizerState& optimizer, const TrainConfig& config,
                       int epoch);

struct WarmupResult {
  ModelParams params;
  Vocabulary vocab;
  OptimizerState optimizer;
  std::vector<double> epoch_losses;
};

// warmup_epochs of plain contrastive training (all flags clean, no teacher,
// in-batch negatives) starting from freshly initialized parameters.
WarmupResult warmup(std::span<const TrainingPair> pairs,
                    const DocumentCollection& collection,
                    const TrainConfig& config);

// Brute-force top-k most similar documents per query under the current
// parameters, excluding the pair's annotated positive.
// Requires |collection| >= k + 1.
HardNegativeStore mine_hard_negatives(const RetrieverView& retriever,
                                      std::span<const TrainingPair> pairs,
                                      const DocumentCollection& collection,
                                      int k);

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "warmup" or "train"
  double mean_loss = 0.0;
  std::optional<long long> flags_clean;
  std::optional<long long> flags_noisy;
  std::optional<DetectionMetrics> detection;
  std::optional<MetricsReport> dev;
};

std::string epoch_record_to_json_line(const EpochRecord& record);

struct RunResult {
  Vocabulary vocab;
  ModelParams params;
  std::optional<TeacherState> teacher;
  std::vector<EpochRecord> epochs;
  ModelParams best_params;
  int best_epoch = 0;
  double best_dev_recall5 = -1.0;
  long long optimizer_steps = 0;
};

// Full training schedule: warmup, then per epoch (npc) detection with the
// current parameters followed by correction-aware updates; per-epoch dev
// retrieval metrics; optional hard-negative mining. When out_dir is given,
// writes metrics.jsonl plus atomically replaced checkpoints per epoch.
RunResult run(const TrainConfig& config,
              const std::vector<TrainingPair>& train_pairs,
              const DocumentCollection& collection,
              const std::vector<TrainingPair>* dev_pairs,
              const std::optional<std::filesystem::path>& out_dir);

// Canonical key=value rendering of a config (one key per line, sorted).
std::string train_config_to_string(const TrainConfig& config);

}  // namespace npclab

#endif  // NPCLAB_TRAINING_HPP_
