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

#include "npclab/cli.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "npclab/checkpoint.hpp"
#include "npclab/errors.hpp"
#include "npclab/io.hpp"
#include "npclab/rng.hpp"

namespace npclab {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kDevSplitSalt = 0x5eed;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + value +
                    "'");
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  T out;
  in >> out;
  if (in.fail() || !in.eof()) {
    throw ConfigError("config: cannot parse value '" + value + "' for key '" +
                      key + "'");
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& value,
                                const std::string& key) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(parse_number<int>(trim(item), key));
  }
  if (out.empty()) {
    throw ConfigError("config: '" + key + "' expects a non-empty list");
  }
  return out;
}

DocumentCollection merge_collections(
    const std::vector<std::filesystem::path>& paths,
    const DocumentCollection& fallback) {
  if (paths.empty()) {
    return fallback;
  }
  DocumentCollection merged;
  for (const std::filesystem::path& path : paths) {
    for (auto& [doc_id, doc_text] : load_collection(path)) {
      const auto [it, inserted] = merged.emplace(doc_id, doc_text);
      if (!inserted && it->second != doc_text) {
        throw DataError("collections disagree on doc_id '" + doc_id + "'");
      }
    }
  }
  return merged;
}

int cmd_gen_data(int topics, int pairs_per_topic, int dev_pairs_per_topic,
                 int vocab, int tokens_per_text, std::uint64_t seed,
                 const std::filesystem::path& out_dir) {
  SyntheticSpec spec;
  spec.num_topics = topics;
  spec.pairs_per_topic = pairs_per_topic;
  spec.vocab_size = vocab;
  spec.tokens_per_text = tokens_per_text;
  spec.seed = seed;
  spec.split = "train";
  Dataset train = generate_synthetic(spec);

  DocumentCollection collection = train.collection;
  std::filesystem::create_directories(out_dir);
  save_pairs(out_dir / "train.jsonl", train.pairs);

  if (dev_pairs_per_topic > 0) {
    SyntheticSpec dev_spec = spec;
    dev_spec.pairs_per_topic = dev_pairs_per_topic;
    dev_spec.seed = mix_seed(seed, kDevSplitSalt);
    dev_spec.split = "dev";
    Dataset dev = generate_synthetic(dev_spec);
    collection.insert(dev.collection.begin(), dev.collection.end());
    save_pairs(out_dir / "dev.jsonl", dev.pairs);
  }
  save_collection(out_dir / "collection.jsonl", collection);
  std::cout << "wrote " << train.pairs.size() << " train pairs, "
            << collection.size() << " collection docs to " << out_dir.string()
            << "\n";
  return 0;
}

int cmd_inject_noise(const std::filesystem::path& pairs_path, double ratio,
                     std::uint64_t seed, const std::filesystem::path& out) {
  Dataset dataset = load_pairs(pairs_path);
  NoiseSpec spec{ratio, seed};
  const std::vector<TrainingPair> noisy =
      inject_noise(std::move(dataset.pairs), spec);
  save_pairs(out, noisy);
  long long corrupted = 0;
  for (const TrainingPair& pair : noisy) {
    if (pair.truth_clean.has_value() && !*pair.truth_clean) ++corrupted;
  }
  std::cout << "corrupted " << corrupted << " of " << noisy.size()
            << " pairs\n";
  return 0;
}

json metrics_to_json(const MetricsReport& report) {
  json j;
  j["mrr"] = report.mrr;
  j["query_count"] = report.query_count;
  json recall;
  for (const auto& [k, value] : report.recall_at) {
    recall[std::to_string(k)] = value;
  }
  j["recall"] = recall;
  return j;
}

int cmd_train(const ExperimentConfig& config) {
  config.train.validate();
  if (config.train_pairs.empty()) {
    throw ConfigError("train: train_pairs path is required");
  }
  Dataset train = load_pairs(config.train_pairs);
  const DocumentCollection collection =
      merge_collections(config.collections, train.collection);

  std::vector<TrainingPair> dev;
  const std::vector<TrainingPair>* dev_ptr = nullptr;
  if (!config.dev_pairs.empty()) {
    dev = load_pairs(config.dev_pairs).pairs;
    dev_ptr = &dev;
  }

  std::optional<std::filesystem::path> out_dir;
  if (!config.out_dir.empty()) {
    out_dir = config.out_dir;
  }
  const RunResult result =
      run(config.train, train.pairs, collection, dev_ptr, out_dir);

  std::cout << "trained " << result.epochs.size() << " epochs ("
            << train_method_name(config.train.method) << ", "
            << negative_mode_name(config.train.negatives) << ")\n";
  if (result.best_epoch > 0) {
    std::cout << "best dev recall@5 " << result.best_dev_recall5 << " at epoch "
              << result.best_epoch << "\n";
  }
  if (out_dir.has_value()) {
    std::cout << "outputs in " << out_dir->string() << "\n";
  }
  return 0;
}

int cmd_eval(const std::filesystem::path& checkpoint_path,
             const std::filesystem::path& pairs_path,
             const std::vector<std::filesystem::path>& collection_paths,
             const std::vector<int>& k_values, int cutoff,
             const std::filesystem::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset dataset = load_pairs(pairs_path);
  const DocumentCollection collection =
      merge_collections(collection_paths, dataset.collection);
  check_referential_integrity(dataset.pairs, collection);
  for (int k : k_values) {
    if (k > cutoff) {
      throw ConfigError("eval: k exceeds the retrieval cutoff");
    }
  }

  std::vector<std::pair<std::string, std::string>> queries;
  std::map<std::string, std::string> gold;
  for (const TrainingPair& pair : dataset.pairs) {
    queries.emplace_back(pair.query_id, pair.query_text);
    gold[pair.query_id] = pair.doc_id;
  }
  const RetrieverView view{ckpt.vocab, ckpt.params, ckpt.meta.kind};
  const RetrievalRun retrieval =
      retrieve(view, queries, collection,
               std::min<int>(cutoff, static_cast<int>(collection.size())));
  const MetricsReport report = evaluate_run(retrieval, gold, k_values);
  const std::string rendered = metrics_to_json(report).dump();
  if (out.empty()) {
    std::cout << rendered << "\n";
  } else {
    atomic_write_text_file(out, rendered + "\n");
  }
  return 0;
}

int cmd_detect_report(const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& pairs_path,
                      const std::filesystem::path& out_dir,
                      const std::string& negatives_for_ppl, int batch_size,
                      double tau_override, double lambda, std::uint64_t seed,
                      int hard_k,
                      const std::vector<std::filesystem::path>& collections) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset dataset = load_pairs(pairs_path);
  const double tau = tau_override > 0.0 ? tau_override : ckpt.meta.tau;
  const RetrieverView view{ckpt.vocab, ckpt.params, ckpt.meta.kind};

  std::vector<PerplexityRecord> records;
  if (negatives_for_ppl == "in_batch") {
    records = compute_perplexities(view, dataset.pairs, batch_size, tau, seed,
                                   /*epoch=*/1);
  } else {
    // Scores the annotated positive against mined hard negatives instead of
    // in-batch ones. Exists only to study how mined negatives distort the
    // perplexity signal; composed here so the detection module itself never
    // touches the hard-negative store.
    const DocumentCollection collection =
        merge_collections(collections, dataset.collection);
    const int k = hard_k > 0 ? hard_k : batch_size - 1;
    const HardNegativeStore store =
        mine_hard_negatives(view, dataset.pairs, collection, k);
    records.reserve(dataset.pairs.size());
    const bool normalize = view.normalize();
    for (const TrainingPair& pair : dataset.pairs) {
      const EmbeddingVector query =
          encode(tokenize(pair.query_text, ckpt.vocab),
                 ckpt.params.query_tower, normalize);
      const EmbeddingVector positive =
          encode(tokenize(pair.doc_text, ckpt.vocab),
                 ckpt.params.doc_params(), normalize);
      std::vector<EmbeddingVector> negatives;
      for (const std::string& doc_id : store.by_pair.at(pair.pair_id)) {
        negatives.push_back(encode(tokenize(collection.at(doc_id), ckpt.vocab),
                                   ckpt.params.doc_params(), normalize));
      }
      records.push_back({pair.pair_id, pair_perplexity(query, positive,
                                                       negatives,
                                                       ckpt.meta.kind, tau)});
    }
  }

  json report;
  report["negatives_for_ppl"] = negatives_for_ppl;
  FlagSet flags;
  try {
    const GmmFit fit = fit_gmm(records, kGmmMaxIters, kGmmTolerance, seed);
    flags = estimate_flags(fit, records, lambda, /*epoch=*/1);
    report["fit"] = {{"weights", fit.weights},
                     {"means", fit.means},
                     {"variances", fit.variances},
                     {"clean_component", fit.clean_component},
                     {"iterations", fit.iterations},
                     {"degenerate", fit.degenerate},
                     {"final_log_likelihood", fit.log_likelihood.back()}};
  } catch (const DegenerateInputError&) {
    flags = all_clean_flags(records, /*epoch=*/1);
    report["fit"] = nullptr;
    report["degenerate_input"] = true;
  }
  report["flags"] = {{"clean", flags.clean_count()},
                     {"noisy", flags.noisy_count()}};

  const bool have_truth = std::all_of(
      dataset.pairs.begin(), dataset.pairs.end(),
      [](const TrainingPair& p) { return p.truth_clean.has_value(); });
  if (have_truth) {
    const DetectionMetrics metrics = detection_report(flags, dataset.pairs);
    report["metrics"] = {{"precision", metrics.precision},
                         {"recall", metrics.recall},
                         {"f1", metrics.f1},
                         {"balanced_accuracy", metrics.balanced_accuracy}};
  }

  std::filesystem::create_directories(out_dir);
  atomic_write_text_file(out_dir / "detect_report.json", report.dump() + "\n");
  export_ppl_histogram(records, flags, dataset.pairs,
                       out_dir / "ppl_histogram.csv");
  std::cout << "wrote detect_report.json and ppl_histogram.csv to "
            << out_dir.string() << "\n";
  return 0;
}

}  // namespace

void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
  TrainConfig& t = config.train;
  if (key == "method") {
    t.method = train_method_from_name(value);
  } else if (key == "negatives") {
    t.negatives = negative_mode_from_name(value);
  } else if (key == "similarity") {
    t.similarity = similarity_from_name(value);
  } else if (key == "tau") {
    t.tau = parse_number<double>(value, key);
  } else if (key == "lambda") {
    t.lambda = parse_number<double>(value, key);
  } else if (key == "alpha") {
    t.alpha = parse_number<double>(value, key);
  } else if (key == "batch_size") {
    t.batch_size = parse_number<int>(value, key);
  } else if (key == "warmup_epochs") {
    t.warmup_epochs = parse_number<int>(value, key);
  } else if (key == "total_epochs") {
    t.total_epochs = parse_number<int>(value, key);
  } else if (key == "learning_rate") {
    t.adam.learning_rate = parse_number<double>(value, key);
  } else if (key == "adam_beta1") {
    t.adam.beta1 = parse_number<double>(value, key);
  } else if (key == "adam_beta2") {
    t.adam.beta2 = parse_number<double>(value, key);
  } else if (key == "adam_epsilon") {
    t.adam.epsilon = parse_number<double>(value, key);
  } else if (key == "hard_negatives_per_query") {
    t.hard_negatives_per_query = parse_number<int>(value, key);
  } else if (key == "seed") {
    t.seed = parse_number<std::uint64_t>(value, key);
  } else if (key == "hidden_dim") {
    t.hidden_dim = parse_number<int>(value, key);
  } else if (key == "shared_towers") {
    t.shared_towers = parse_bool(value, key);
  } else if (key == "kl_direction") {
    if (value == "student_teacher") {
      t.kl_teacher_first = false;
    } else if (value == "teacher_student") {
      t.kl_teacher_first = true;
    } else {
      throw ConfigError("config: kl_direction must be student_teacher or "
                        "teacher_student");
    }
  } else if (key == "fixed_flags") {
    t.fixed_flags = parse_bool(value, key);
  } else if (key == "detection_batch_size") {
    t.detection_batch_size = parse_number<int>(value, key);
  } else if (key == "remine_each_epoch") {
    t.remine_each_epoch = parse_bool(value, key);
  } else if (key == "grad_clip_norm") {
    t.grad_clip_norm = parse_number<double>(value, key);
  } else if (key == "eval_k") {
    t.eval_k = parse_int_list(value, key);
  } else if (key == "retrieval_cutoff") {
    t.retrieval_cutoff = parse_number<int>(value, key);
  } else if (key == "train_pairs") {
    config.train_pairs = value;
  } else if (key == "dev_pairs") {
    config.dev_pairs = value;
  } else if (key == "collection") {
    config.collections.clear();
    std::istringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
      config.collections.emplace_back(trim(item));
    }
  } else if (key == "out_dir") {
    config.out_dir = value;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig config;
  const std::string content = read_text_file(path);
  std::istringstream stream(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected key = value");
    }
    apply_config_entry(config, trim(trimmed.substr(0, eq)),
                       trim(trimmed.substr(eq + 1)));
  }
  return config;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"desk-scale noisy-pair training lab for dense retrieval"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  int topics = 20, pairs_per_topic = 100, dev_pairs_per_topic = 0;
  int vocab = 500, tokens_per_text = 8;
  std::uint64_t gen_seed = 0;
  std::string gen_out_dir;
  gen->add_option("--topics", topics, "number of topics")->required();
  gen->add_option("--pairs-per-topic", pairs_per_topic, "train pairs per topic")
      ->required();
  gen->add_option("--dev-pairs-per-topic", dev_pairs_per_topic,
                  "held-out dev pairs per topic (0 disables)");
  gen->add_option("--vocab", vocab, "generator vocabulary size");
  gen->add_option("--tokens-per-text", tokens_per_text, "words per text");
  gen->add_option("--seed", gen_seed, "generation seed")->required();
  gen->add_option("--out-dir", gen_out_dir, "output directory")->required();

  // inject-noise
  auto* inject = app.add_subcommand(
      "inject-noise", "replace annotated documents with unrelated ones");
  std::string inject_pairs, inject_out;
  double ratio = 0.0;
  std::uint64_t inject_seed = 0;
  inject->add_option("--pairs", inject_pairs, "input pairs file")->required();
  inject->add_option("--ratio", ratio, "fraction of pairs to corrupt")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  inject->add_option("--seed", inject_seed, "injection seed")->required();
  inject->add_option("--out", inject_out, "output pairs file")->required();

  // train
  auto* train = app.add_subcommand("train", "train a retriever");
  std::string config_path;
  std::string method_override, negatives_override;
  std::string train_pairs_override, dev_pairs_override, out_dir_override;
  std::vector<std::string> collection_override;
  int hard_k_override = -1, warmup_override = -1, total_override = -1;
  std::int64_t seed_override = -1;
  train->add_option("--config", config_path, "experiment config file")
      ->required();
  train->add_option("--method", method_override, "baseline | npc");
  train->add_option("--negatives", negatives_override, "in_batch | hard");
  train->add_option("--hard-k", hard_k_override, "mined negatives per query");
  train->add_option("--seed", seed_override, "run seed");
  train->add_option("--warmup-epochs", warmup_override, "warmup epochs");
  train->add_option("--total-epochs", total_override, "total epochs");
  train->add_option("--train-pairs", train_pairs_override, "train pairs file");
  train->add_option("--dev-pairs", dev_pairs_override, "dev pairs file");
  train->add_option("--collection", collection_override,
                    "collection file (repeatable)");
  train->add_option("--out-dir", out_dir_override, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "retrieval metrics for a checkpoint");
  std::string eval_checkpoint, eval_pairs, eval_out;
  std::vector<std::string> eval_collections;
  std::vector<int> eval_k = {1, 5, 20};
  int eval_cutoff = 100;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--pairs", eval_pairs, "query/gold pairs file")->required();
  eval->add_option("--collection", eval_collections,
                   "collection file (repeatable)");
  eval->add_option("--k", eval_k, "recall cutoffs");
  eval->add_option("--cutoff", eval_cutoff, "retrieval depth");
  eval->add_option("--out", eval_out, "metrics JSON path (default stdout)");

  // detect-report
  auto* detect = app.add_subcommand(
      "detect-report", "perplexity-based noise detection report");
  std::string det_checkpoint, det_pairs, det_out_dir;
  std::string negatives_for_ppl = "in_batch";
  std::vector<std::string> det_collections;
  int det_batch_size = 64, det_hard_k = 0;
  double det_tau = 0.0, det_lambda = 0.5;
  std::uint64_t det_seed = 1;
  detect->add_option("--checkpoint", det_checkpoint, "checkpoint file")
      ->required();
  detect->add_option("--pairs", det_pairs, "pairs file")->required();
  detect->add_option("--out-dir", det_out_dir, "output directory")->required();
  detect
      ->add_option("--negatives-for-ppl", negatives_for_ppl,
                   "in_batch | hard (hard exists only for the detection "
                   "degradation study)")
      ->check(CLI::IsMember({"in_batch", "hard"}));
  detect->add_option("--batch-size", det_batch_size, "detection batch size");
  detect->add_option("--tau", det_tau,
                     "temperature (default: checkpoint value)");
  detect->add_option("--lambda", det_lambda, "clean-flag threshold");
  detect->add_option("--seed", det_seed, "batching seed");
  detect->add_option("--hard-k", det_hard_k,
                     "mined negatives per query (default batch-size - 1)");
  detect->add_option("--collection", det_collections,
                     "collection file (repeatable; required for hard)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto to_paths = [](const std::vector<std::string>& raw) {
    std::vector<std::filesystem::path> out;
    out.reserve(raw.size());
    for (const std::string& s : raw) out.emplace_back(s);
    return out;
  };

  try {
    if (gen->parsed()) {
      return cmd_gen_data(topics, pairs_per_topic, dev_pairs_per_topic, vocab,
                          tokens_per_text, gen_seed, gen_out_dir);
    }
    if (inject->parsed()) {
      return cmd_inject_noise(inject_pairs, ratio, inject_seed, inject_out);
    }
    if (train->parsed()) {
      ExperimentConfig config = load_experiment_config(config_path);
      if (!method_override.empty()) {
        config.train.method = train_method_from_name(method_override);
      }
      if (!negatives_override.empty()) {
        config.train.negatives = negative_mode_from_name(negatives_override);
      }
      if (hard_k_override >= 0) {
        config.train.hard_negatives_per_query = hard_k_override;
      }
      if (seed_override >= 0) {
        config.train.seed = static_cast<std::uint64_t>(seed_override);
      }
      if (warmup_override >= 0) config.train.warmup_epochs = warmup_override;
      if (total_override >= 0) config.train.total_epochs = total_override;
      if (!train_pairs_override.empty()) {
        config.train_pairs = train_pairs_override;
      }
      if (!dev_pairs_override.empty()) config.dev_pairs = dev_pairs_override;
      if (!collection_override.empty()) {
        config.collections = to_paths(collection_override);
      }
      if (!out_dir_override.empty()) config.out_dir = out_dir_override;
      return cmd_train(config);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_pairs, to_paths(eval_collections),
                      eval_k, eval_cutoff, eval_out);
    }
    if (detect->parsed()) {
      return cmd_detect_report(det_checkpoint, det_pairs, det_out_dir,
                               negatives_for_ppl, det_batch_size, det_tau,
                               det_lambda, det_seed, det_hard_k,
                               to_paths(det_collections));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    // DataError, DegenerateInputError, IoError and anything unexpected.
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace npclab
