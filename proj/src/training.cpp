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

#include "npclab/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "npclab/checkpoint.hpp"
#include "npclab/errors.hpp"
#include "npclab/io.hpp"
#include "npclab/rng.hpp"

namespace npclab {

namespace {

using json = nlohmann::json;

template <typename Fn>
void for_each_tensor(EncoderParams& tower, Fn&& fn) {
  fn(tower.embedding);
  fn(tower.projection);
  fn(tower.bias);
}

template <typename Fn>
void zip_tensors(ModelParams& params, const GradientAccumulator& grads,
                 GradientAccumulator& m, GradientAccumulator& v, Fn&& fn) {
  fn(params.query_tower.embedding, grads.query_tower.embedding,
     m.query_tower.embedding, v.query_tower.embedding);
  fn(params.query_tower.projection, grads.query_tower.projection,
     m.query_tower.projection, v.query_tower.projection);
  fn(params.query_tower.bias, grads.query_tower.bias, m.query_tower.bias,
     v.query_tower.bias);
  if (params.doc_tower.has_value()) {
    fn(params.doc_tower->embedding, grads.doc_tower->embedding,
       m.doc_tower->embedding, v.doc_tower->embedding);
    fn(params.doc_tower->projection, grads.doc_tower->projection,
       m.doc_tower->projection, v.doc_tower->projection);
    fn(params.doc_tower->bias, grads.doc_tower->bias, m.doc_tower->bias,
       v.doc_tower->bias);
  }
}

template <typename Fn>
void for_each_grad_tensor(GradientAccumulator& grads, Fn&& fn) {
  for_each_tensor(grads.query_tower, fn);
  if (grads.doc_tower.has_value()) {
    for_each_tensor(*grads.doc_tower, fn);
  }
}

}  // namespace

TrainMethod train_method_from_name(std::string_view name) {
  if (name == "baseline") return TrainMethod::kBaseline;
  if (name == "npc") return TrainMethod::kNpc;
  throw ConfigError("unknown method: " + std::string(name));
}

NegativeMode negative_mode_from_name(std::string_view name) {
  if (name == "in_batch") return NegativeMode::kInBatch;
  if (name == "hard") return NegativeMode::kHard;
  throw ConfigError("unknown negatives mode: " + std::string(name));
}

const char* train_method_name(TrainMethod method) {
  return method == TrainMethod::kBaseline ? "baseline" : "npc";
}

const char* negative_mode_name(NegativeMode mode) {
  return mode == NegativeMode::kInBatch ? "in_batch" : "hard";
}

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("config: tau must be > 0");
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("config: lambda must be in (0, 1)");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("config: alpha must be in [0, 1]");
  }
  if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (warmup_epochs < 0) {
    throw ConfigError("config: warmup_epochs must be >= 0");
  }
  // Equality makes the run pure warmup, a baseline-equivalent degenerate.
  if (total_epochs < warmup_epochs) {
    throw ConfigError("config: total_epochs must be >= warmup_epochs");
  }
  if (!(adam.learning_rate > 0.0)) {
    throw ConfigError("config: learning_rate must be > 0");
  }
  if (hidden_dim < 1) throw ConfigError("config: hidden_dim must be >= 1");
  if (hard_negatives_per_query < 0) {
    throw ConfigError("config: hard_negatives_per_query must be >= 0");
  }
  if (detection_batch_size < 0) {
    throw ConfigError("config: detection_batch_size must be >= 0");
  }
  if (grad_clip_norm < 0.0) {
    throw ConfigError("config: grad_clip_norm must be >= 0");
  }
  if (eval_k.empty()) throw ConfigError("config: eval_k must be non-empty");
  for (int k : eval_k) {
    if (k < 1) throw ConfigError("config: eval_k entries must be >= 1");
    if (k > retrieval_cutoff) {
      throw ConfigError("config: eval_k entries must be <= retrieval_cutoff");
    }
  }
}

OptimizerState OptimizerState::zeros_like(const ModelParams& params) {
  OptimizerState state;
  state.first_moment = GradientAccumulator::zeros_like(params);
  state.second_moment = GradientAccumulator::zeros_like(params);
  state.step = 0;
  return state;
}

double clip_gradients(GradientAccumulator& grads, double max_norm) {
  double sum_sq = 0.0;
  for_each_grad_tensor(grads, [&](std::vector<double>& t) {
    for (double g : t) sum_sq += g * g;
  });
  const double norm = std::sqrt(sum_sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for_each_grad_tensor(grads, [&](std::vector<double>& t) {
      for (double& g : t) g *= scale;
    });
  }
  return norm;
}

void adam_step(ModelParams& params, const GradientAccumulator& grads,
               OptimizerState& state, const AdamConfig& config) {
  ++state.step;
  const double bc1 =
      1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 =
      1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  zip_tensors(params, grads, state.first_moment, state.second_moment,
              [&](std::vector<double>& theta, const std::vector<double>& g,
                  std::vector<double>& m, std::vector<double>& v) {
                if (theta.size() != g.size()) {
                  throw ContractViolation("adam_step: shape mismatch");
                }
                for (std::size_t i = 0; i < theta.size(); ++i) {
                  m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                  v[i] =
                      config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                  const double m_hat = m[i] / bc1;
                  const double v_hat = v[i] / bc2;
                  theta[i] -= config.learning_rate * m_hat /
                              (std::sqrt(v_hat) + config.epsilon);
                }
              });
}

TrainingBatch assemble_batch(std::span<const TrainingPair> pairs,
                             std::span<const int> indices,
                             const Vocabulary& vocab,
                             const HardNegativeStore* store,
                             const DocumentCollection* collection) {
  TrainingBatch batch;
  std::unordered_map<std::string, int> slot_of;
  slot_of.reserve(indices.size() * 2);

  auto add_doc = [&](const std::string& doc_id, const std::string& doc_text) {
    const auto it = slot_of.find(doc_id);
    if (it != slot_of.end()) return it->second;
    const int slot = static_cast<int>(batch.doc_tokens.size());
    slot_of.emplace(doc_id, slot);
    batch.doc_tokens.push_back(tokenize(doc_text, vocab));
    return slot;
  };

  for (int idx : indices) {
    const TrainingPair& pair = pairs[static_cast<std::size_t>(idx)];
    add_doc(pair.doc_id, pair.doc_text);
  }
  if (store != nullptr && !store->empty()) {
    if (collection == nullptr) {
      throw ContractViolation(
          "assemble_batch: hard negatives need the document collection");
    }
    for (int idx : indices) {
      const TrainingPair& pair = pairs[static_cast<std::size_t>(idx)];
      const auto it = store->by_pair.find(pair.pair_id);
      if (it == store->by_pair.end()) continue;
      for (const std::string& doc_id : it->second) {
        const auto doc_it = collection->find(doc_id);
        if (doc_it == collection->end()) {
          throw DataError("assemble_batch: mined doc_id '" + doc_id +
                          "' missing from collection");
        }
        add_doc(doc_id, doc_it->second);
      }
    }
  }

  std::vector<int> all_slots(batch.doc_tokens.size());
  for (std::size_t s = 0; s < all_slots.size(); ++s) {
    all_slots[s] = static_cast<int>(s);
  }
  for (int idx : indices) {
    const TrainingPair& pair = pairs[static_cast<std::size_t>(idx)];
    batch.query_tokens.push_back(tokenize(pair.query_text, vocab));
    batch.pair_ids.push_back(pair.pair_id);
    CandidateSet cand;
    cand.doc_slots = all_slots;
    cand.positive_pos = slot_of.at(pair.doc_id);
    batch.candidates.push_back(std::move(cand));
  }
  return batch;
}

ModelParams init_model(const TrainConfig& config, int vocab_size) {
  ModelParams params;
  params.query_tower = EncoderParams::random_init(
      vocab_size, config.hidden_dim, mix_seed(config.seed, seed_roles::kInit));
  if (!config.shared_towers) {
    params.doc_tower = EncoderParams::random_init(
        vocab_size, config.hidden_dim,
        mix_seed(config.seed, seed_roles::kInit + 1));
  }
  return params;
}

Vocabulary build_vocabulary(std::span<const TrainingPair> pairs,
                            const DocumentCollection& collection) {
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2 + collection.size());
  for (const TrainingPair& pair : pairs) {
    texts.push_back(pair.query_text);
    texts.push_back(pair.doc_text);
  }
  for (const auto& [doc_id, doc_text] : collection) {
    texts.push_back(doc_text);
  }
  return Vocabulary::build(texts);
}

EpochStats train_epoch(ModelParams& params,
                       std::optional<TeacherState>& teacher,
                       const Vocabulary& vocab,
                       std::span<const TrainingPair> pairs,
                       const FlagSet* flags, const HardNegativeStore* store,
                       const DocumentCollection* collection,
                       OptimizerState& optimizer, const TrainConfig& config,
                       int epoch) {
  const LossConfig loss_config = config.loss_config();
  const std::vector<std::vector<int>> index_batches =
      batches(static_cast<int>(pairs.size()), config.batch_size,
              mix_seed(config.seed, seed_roles::kTrainBatches), epoch);

  EpochStats stats;
  double loss_sum = 0.0;
  long long example_count = 0;
  for (const std::vector<int>& indices : index_batches) {
    const TrainingBatch batch =
        assemble_batch(pairs, indices, vocab, store, collection);

    std::vector<int> batch_flags(indices.size(), 1);
    if (flags != nullptr) {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        batch_flags[i] = flags->for_pair(batch.pair_ids[i]).flag;
      }
    }

    std::vector<ProbVector> teacher_dists;
    const std::vector<ProbVector>* teacher_ptr = nullptr;
    if (teacher.has_value()) {
      teacher_dists =
          candidate_distributions(batch, teacher->params, loss_config);
      teacher_ptr = &teacher_dists;
    }

    LossResult result =
        loss_and_gradients(batch, params, teacher_ptr, batch_flags,
                           loss_config);
    clip_gradients(result.grads, config.grad_clip_norm);
    adam_step(params, result.grads, optimizer, config.adam);
    if (teacher.has_value()) {
      ema_update(*teacher, params);
    }

    loss_sum += result.loss * static_cast<double>(indices.size());
    example_count += static_cast<long long>(indices.size());
    ++stats.batches;
  }
  stats.mean_loss =
      example_count > 0 ? loss_sum / static_cast<double>(example_count) : 0.0;
  return stats;
}

WarmupResult warmup(std::span<const TrainingPair> pairs,
                    const DocumentCollection& collection,
                    const TrainConfig& config) {
  config.validate();
  WarmupResult result;
  result.vocab = build_vocabulary(pairs, collection);
  result.params = init_model(config, result.vocab.size());
  result.optimizer = OptimizerState::zeros_like(result.params);

  std::optional<TeacherState> no_teacher;
  for (int epoch = 1; epoch <= config.warmup_epochs; ++epoch) {
    const EpochStats stats =
        train_epoch(result.params, no_teacher, result.vocab, pairs,
                    /*flags=*/nullptr, /*store=*/nullptr,
                    /*collection=*/nullptr, result.optimizer, config, epoch);
    if (!std::isfinite(stats.mean_loss)) {
      throw NumericError("warmup: training loss diverged");
    }
    result.epoch_losses.push_back(stats.mean_loss);
  }
  return result;
}

HardNegativeStore mine_hard_negatives(const RetrieverView& retriever,
                                      std::span<const TrainingPair> pairs,
                                      const DocumentCollection& collection,
                                      int k) {
  HardNegativeStore store;
  if (k == 0) {
    return store;
  }
  if (k < 0 || collection.size() < static_cast<std::size_t>(k) + 1) {
    throw ConfigError("mine_hard_negatives: collection smaller than k + 1");
  }
  std::vector<std::string> doc_ids, doc_texts;
  doc_ids.reserve(collection.size());
  doc_texts.reserve(collection.size());
  for (const auto& [doc_id, doc_text] : collection) {
    doc_ids.push_back(doc_id);
    doc_texts.push_back(doc_text);
  }
  const std::vector<EmbeddingVector> doc_embs =
      embed_texts(retriever, doc_texts, /*as_query=*/false);

  store.by_pair.reserve(pairs.size());
  for (const TrainingPair& pair : pairs) {
    const std::vector<int> tokens = tokenize(pair.query_text, retriever.vocab);
    const EmbeddingVector query =
        encode(tokens, retriever.params.query_tower, retriever.normalize());
    std::vector<double> scores(doc_embs.size());
    for (std::size_t j = 0; j < doc_embs.size(); ++j) {
      scores[j] = similarity(query.values, doc_embs[j].values, retriever.kind);
    }
    const std::vector<int> top =
        rank_top_k(scores, doc_ids, std::min<int>(k + 1,
                                                  static_cast<int>(
                                                      doc_ids.size())));
    std::vector<std::string> mined;
    mined.reserve(static_cast<std::size_t>(k));
    for (int idx : top) {
      const std::string& doc_id = doc_ids[static_cast<std::size_t>(idx)];
      if (doc_id == pair.doc_id) continue;
      mined.push_back(doc_id);
      if (static_cast<int>(mined.size()) == k) break;
    }
    store.by_pair.emplace(pair.pair_id, std::move(mined));
  }
  return store;
}

std::string epoch_record_to_json_line(const EpochRecord& record) {
  json j;
  j["epoch"] = record.epoch;
  j["phase"] = record.phase;
  j["mean_loss"] = record.mean_loss;
  if (record.flags_clean.has_value()) {
    j["flags"] = {{"clean", *record.flags_clean},
                  {"noisy", *record.flags_noisy}};
  }
  if (record.detection.has_value()) {
    const DetectionMetrics& d = *record.detection;
    j["detection"] = {{"precision", d.precision},
                      {"recall", d.recall},
                      {"f1", d.f1},
                      {"balanced_accuracy", d.balanced_accuracy},
                      {"true_positive", d.true_positive},
                      {"false_positive", d.false_positive},
                      {"true_negative", d.true_negative},
                      {"false_negative", d.false_negative}};
  }
  if (record.dev.has_value()) {
    json dev;
    dev["mrr"] = record.dev->mrr;
    dev["query_count"] = record.dev->query_count;
    json recall;
    for (const auto& [k, value] : record.dev->recall_at) {
      recall[std::to_string(k)] = value;
    }
    dev["recall"] = recall;
    j["dev"] = dev;
  }
  return j.dump();
}

std::string train_config_to_string(const TrainConfig& config) {
  std::ostringstream out;
  out.precision(17);
  out << "alpha = " << config.alpha << '\n';
  out << "adam_beta1 = " << config.adam.beta1 << '\n';
  out << "adam_beta2 = " << config.adam.beta2 << '\n';
  out << "adam_epsilon = " << config.adam.epsilon << '\n';
  out << "batch_size = " << config.batch_size << '\n';
  out << "detection_batch_size = " << config.detection_batch_size << '\n';
  out << "eval_k = ";
  for (std::size_t i = 0; i < config.eval_k.size(); ++i) {
    if (i > 0) out << ',';
    out << config.eval_k[i];
  }
  out << '\n';
  out << "fixed_flags = " << (config.fixed_flags ? "true" : "false") << '\n';
  out << "grad_clip_norm = " << config.grad_clip_norm << '\n';
  out << "hard_negatives_per_query = " << config.hard_negatives_per_query
      << '\n';
  out << "hidden_dim = " << config.hidden_dim << '\n';
  out << "kl_direction = "
      << (config.kl_teacher_first ? "teacher_student" : "student_teacher")
      << '\n';
  out << "lambda = " << config.lambda << '\n';
  out << "learning_rate = " << config.adam.learning_rate << '\n';
  out << "method = " << train_method_name(config.method) << '\n';
  out << "negatives = " << negative_mode_name(config.negatives) << '\n';
  out << "remine_each_epoch = " << (config.remine_each_epoch ? "true" : "false")
      << '\n';
  out << "retrieval_cutoff = " << config.retrieval_cutoff << '\n';
  out << "seed = " << config.seed << '\n';
  out << "shared_towers = " << (config.shared_towers ? "true" : "false")
      << '\n';
  out << "similarity = " << similarity_name(config.similarity) << '\n';
  out << "tau = " << config.tau << '\n';
  out << "total_epochs = " << config.total_epochs << '\n';
  out << "warmup_epochs = " << config.warmup_epochs << '\n';
  return out.str();
}

RunResult run(const TrainConfig& config,
              const std::vector<TrainingPair>& train_pairs,
              const DocumentCollection& collection,
              const std::vector<TrainingPair>* dev_pairs,
              const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  if (train_pairs.empty()) {
    throw ContractViolation("run: empty training set");
  }
  check_referential_integrity(train_pairs, collection);
  if (dev_pairs != nullptr) {
    check_referential_integrity(*dev_pairs, collection);
  }

  RunResult result;
  result.vocab = build_vocabulary(train_pairs, collection);
  result.params = init_model(config, result.vocab.size());
  OptimizerState optimizer = OptimizerState::zeros_like(result.params);

  const CheckpointMeta meta{config.similarity, config.tau, config.hidden_dim,
                            config.shared_towers,
                            fnv1a_hex(train_config_to_string(config))};
  std::filesystem::path metrics_path;
  if (out_dir.has_value()) {
    std::filesystem::create_directories(*out_dir);
    metrics_path = *out_dir / "metrics.jsonl";
    atomic_write_text_file(metrics_path, "");
    atomic_write_text_file(*out_dir / "config_used.cfg",
                           train_config_to_string(config));
  }

  const bool have_truth =
      std::all_of(train_pairs.begin(), train_pairs.end(),
                  [](const TrainingPair& p) { return p.truth_clean.has_value(); });

  std::vector<std::pair<std::string, std::string>> dev_queries;
  std::map<std::string, std::string> dev_gold;
  if (dev_pairs != nullptr) {
    for (const TrainingPair& pair : *dev_pairs) {
      dev_queries.emplace_back(pair.query_id, pair.query_text);
      dev_gold[pair.query_id] = pair.doc_id;
    }
  }

  HardNegativeStore store;
  std::optional<FlagSet> fixed_flag_set;
  result.best_params = result.params;

  for (int epoch = 1; epoch <= config.total_epochs; ++epoch) {
    const bool in_warmup = epoch <= config.warmup_epochs;
    const bool npc = config.method == TrainMethod::kNpc;

    EpochRecord record;
    record.epoch = epoch;
    record.phase = in_warmup ? "warmup" : "train";

    const FlagSet* flags = nullptr;
    FlagSet epoch_flags;
    if (!in_warmup && npc) {
      if (!result.teacher.has_value()) {
        result.teacher = init_teacher(result.params, config.alpha);
      }
      if (config.fixed_flags && fixed_flag_set.has_value()) {
        epoch_flags = *fixed_flag_set;
      } else {
        const RetrieverView view{result.vocab, result.params,
                                 config.similarity};
        const std::vector<PerplexityRecord> records = compute_perplexities(
            view, train_pairs, config.detection_batch(), config.tau,
            mix_seed(config.seed, seed_roles::kDetectBatches), epoch);
        try {
          const GmmFit fit =
              fit_gmm(records, kGmmMaxIters, kGmmTolerance, config.seed);
          epoch_flags = estimate_flags(fit, records, config.lambda, epoch);
        } catch (const DegenerateInputError&) {
          epoch_flags = all_clean_flags(records, epoch);
        }
        if (config.fixed_flags) {
          fixed_flag_set = epoch_flags;
        }
      }
      flags = &epoch_flags;
      record.flags_clean = epoch_flags.clean_count();
      record.flags_noisy = epoch_flags.noisy_count();
      if (have_truth) {
        record.detection = detection_report(epoch_flags, train_pairs);
      }
    }

    const HardNegativeStore* store_ptr = nullptr;
    if (!in_warmup && config.negatives == NegativeMode::kHard &&
        config.hard_negatives_per_query > 0) {
      if (store.empty() || config.remine_each_epoch) {
        const RetrieverView view{result.vocab, result.params,
                                 config.similarity};
        store = mine_hard_negatives(view, train_pairs, collection,
                                    config.hard_negatives_per_query);
      }
      store_ptr = &store;
    }

    std::optional<TeacherState> no_teacher;
    std::optional<TeacherState>& teacher_ref =
        (!in_warmup && npc) ? result.teacher : no_teacher;
    const EpochStats stats =
        train_epoch(result.params, teacher_ref, result.vocab, train_pairs,
                    flags, store_ptr, &collection, optimizer, config, epoch);
    if (!std::isfinite(stats.mean_loss)) {
      throw NumericError("run: training loss diverged at epoch " +
                         std::to_string(epoch));
    }
    record.mean_loss = stats.mean_loss;

    if (dev_pairs != nullptr && !dev_queries.empty()) {
      const RetrieverView view{result.vocab, result.params, config.similarity};
      const RetrievalRun dev_run =
          retrieve(view, dev_queries, collection,
                   std::min<int>(config.retrieval_cutoff,
                                 static_cast<int>(collection.size())));
      record.dev = evaluate_run(dev_run, dev_gold, config.eval_k);
      const double recall5 = recall_at_k(dev_run, dev_gold, 5);
      if (recall5 > result.best_dev_recall5) {
        result.best_dev_recall5 = recall5;
        result.best_epoch = epoch;
        result.best_params = result.params;
      }
    }

    result.epochs.push_back(record);
    if (out_dir.has_value()) {
      append_text_file(metrics_path, epoch_record_to_json_line(record) + "\n");
      save_checkpoint(*out_dir / "checkpoint_last.json", result.vocab,
                      result.params, meta);
      if (result.teacher.has_value()) {
        save_teacher_checkpoint(*out_dir / "teacher_last.json", result.vocab,
                                *result.teacher, meta);
      }
    }
  }

  if (result.best_epoch == 0) {
    result.best_params = result.params;
  }
  result.optimizer_steps = optimizer.step;
  if (out_dir.has_value()) {
    save_checkpoint(*out_dir / "checkpoint_best.json", result.vocab,
                    result.best_params, meta);
  }
  return result;
}

}  // namespace npclab
