/*
 * Copyright 2026 The stilts-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stilts {

// ---------------------------------------------------------------- text

/// Lowercased whitespace tokenization. "Word" means whitespace token;
/// punctuation is not split off.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces; inverse of tokenize on
/// whitespace-normalized lowercase text.
std::string detokenize(std::span<const std::string> tokens);

// --------------------------------------------------------------- vocab

struct Vocab {
  static constexpr int pad = 0, unk = 1, cls = 2, sep = 3, mask = 4;
  static const std::array<std::string, 5>& specials();

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  std::size_t size() const { return id_to_token.size(); }
  /// Token id, falling back to [UNK] for unknown tokens.
  int id(const std::string& token) const;
  const std::string& token(int id) const;
};

/// Specials first, then corpus tokens by descending frequency, ties
/// broken lexicographically, until max_size ids are assigned.
Vocab build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t max_size);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

std::vector<int> to_ids(const Vocab& vocab, std::span<const std::string> tokens);

// --------------------------------------------------------------- tasks

enum class Arity { single, pair };
enum class LabelKind { classification, regression };

/// Metric names understood by the metrics module.
inline constexpr const char* kAccuracy = "accuracy";
inline constexpr const char* kF1 = "f1";
inline constexpr const char* kMatthews = "matthews";
inline constexpr const char* kPearson = "pearson";
inline constexpr const char* kSpearman = "spearman";

struct TaskSpec {
  std::string name;
  Arity arity = Arity::single;
  LabelKind label_kind = LabelKind::classification;
  std::size_t n_classes = 2;
  std::vector<std::string> metrics{kAccuracy};
  /// Chance/majority-level score per metric, on the reported 0-100 scale
  /// (correlations at chance are 0).
  std::map<std::string, double> chance_scores{{kAccuracy, 50.0}};

  void validate() const;
  const std::string& primary_metric() const { return metrics.front(); }
  double primary_chance() const { return chance_scores.at(metrics.front()); }

  bool operator==(const TaskSpec&) const = default;
};

struct Example {
  std::string guid;
  std::vector<std::string> text_a;
  std::optional<std::vector<std::string>> text_b;
  /// Class index (stored exactly) for classification, real value for
  /// regression.
  double label = 0.0;

  int class_label() const { return static_cast<int>(label); }
  bool operator==(const Example&) const = default;
};

struct Dataset {
  TaskSpec task;
  std::vector<Example> train, dev, test;
};

/// Checks every example against the task's arity and label constraints
/// and guid uniqueness per split; throws ConfigError naming the offender.
void validate_dataset(const Dataset& dataset);

// ----------------------------------------------------------------- tsv

/// Zero-based column indices into a tab-separated row. guid == -1
/// synthesizes "row-N" guids; text_b must be set exactly for pair tasks.
struct ColumnMap {
  bool has_header = true;
  int guid = -1;
  int text_a = 0;
  int text_b = -1;
  int label = 1;

  bool operator==(const ColumnMap&) const = default;
};

/// Reads one split from a UTF-8 TSV file. Errors carry the 1-based file
/// row number.
std::vector<Example> load_tsv(const std::string& path, const TaskSpec& task, const ColumnMap& columns);

/// Writes header guid / text_a [/ text_b] / label. Floats keep full
/// precision so a reload is exact.
void save_tsv(const std::string& path, const TaskSpec& task, std::span<const Example> split);

/// One sentence per line, whitespace tokens.
std::vector<std::vector<std::string>> load_sentence_corpus(const std::string& path);
void save_sentence_corpus(std::span<const std::vector<std::string>> corpus, const std::string& path);

// ------------------------------------------------------------ sampling

/// min(cap, n) examples uniformly without replacement, order shuffled.
/// Deterministic in seed and independent of the input order (examples
/// are keyed by guid before drawing).
std::vector<Example> downsample(std::span<const Example> split, std::size_t cap, std::uint64_t seed);

/// Splits examples into (rest, dev) with ceil(fraction * n) dev rows,
/// drawn uniformly; deterministic in seed.
std::pair<std::vector<Example>, std::vector<Example>> split_off_dev(std::span<const Example> examples,
                                                                    double dev_fraction, std::uint64_t seed);

// ------------------------------------------------- generated datasets

/// Book-like synthetic corpus: sentences of 8-16 pronounceable words,
/// all tokens within a sentence distinct.
std::vector<std::vector<std::string>> gen_desk_corpus(std::size_t n_sentences, std::uint64_t seed);

TaskSpec fake_sentence_task();

class Rng;  // rng.hpp

/// Corruption primitive behind gen_fake_sentences: swaps k disjoint
/// pairs of positions (2k distinct indices, sampled uniformly).
/// Requires 2k <= |sentence|.
std::vector<std::string> make_fake(std::span<const std::string> sentence, std::size_t k, Rng& rng);

/// Binary real-vs-fake dataset: exactly n/2 corpus sentences kept as-is
/// and n/2 corrupted copies made by swapping k in {2,3,4} disjoint pairs
/// of positions (2k distinct indices). A swap result equal to its source
/// is re-rolled up to 10 times, then that sentence is skipped. Label 1 =
/// real, 0 = fake. Everything lands in the train split; use
/// split_off_dev for evaluation data.
Dataset gen_fake_sentences(std::span<const std::vector<std::string>> corpus, std::size_t n,
                           std::uint64_t seed);

enum class Relatedness { related, unrelated };

/// Label rule of the synthetic pair tasks: does every token of b occur
/// in a?
bool subset_entails(std::span<const std::string> a, std::span<const std::string> b);

struct SynthPair {
  Dataset intermediate;
  Dataset target;
};

/// Desk-scale transfer pair. Both tasks are sentence-pair binary
/// classification with exact 50/50 label balance and disjoint
/// vocabularies linked by a fixed bijection. `related` gives both tasks
/// the subset-entailment rule; `unrelated` relabels the intermediate
/// task by length parity, which shares no structure with the target.
SynthPair gen_synthetic_pair_tasks(std::uint64_t grammar_seed, Relatedness relatedness);

/// Every distinct word the synthetic generators can emit (both task
/// families plus the desk corpus vocabulary); feed to build_vocab so
/// pretraining covers the task vocabulary.
std::vector<std::vector<std::string>> synth_vocabulary_corpus();

}  // namespace stilts
