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
#include "stilts/datakit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "stilts/errors.hpp"
#include "stilts/rng.hpp"

namespace stilts {

namespace {

[[noreturn]] void row_error(const std::string& path, std::size_t row, const std::string& msg) {
  throw ConfigError(path + " row " + std::to_string(row) + ": " + msg);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

const std::string& field_at(const std::vector<std::string>& fields, int index, const char* what,
                            const std::string& path, std::size_t row) {
  if (index < 0 || static_cast<std::size_t>(index) >= fields.size()) {
    row_error(path, row, std::string("missing column ") + std::to_string(index) + " (" + what + ")");
  }
  return fields[static_cast<std::size_t>(index)];
}

double parse_label(const std::string& text, const TaskSpec& task, const std::string& path, std::size_t row) {
  if (task.label_kind == LabelKind::classification) {
    std::size_t used = 0;
    long value = 0;
    try {
      value = std::stol(text, &used);
    } catch (const std::exception&) {
      row_error(path, row, "unparsable class label '" + text + "'");
    }
    if (used != text.size()) row_error(path, row, "unparsable class label '" + text + "'");
    if (value < 0 || static_cast<std::size_t>(value) >= task.n_classes) {
      row_error(path, row, "class label " + std::to_string(value) + " outside [0, " +
                               std::to_string(task.n_classes) + ")");
    }
    return static_cast<double>(value);
  }
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    row_error(path, row, "unparsable regression label '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(value)) {
    row_error(path, row, "unparsable regression label '" + text + "'");
  }
  return value;
}

std::string format_label(const TaskSpec& task, double label) {
  if (task.label_kind == LabelKind::classification) {
    return std::to_string(static_cast<long>(label));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", label);
  return buf;
}

// Deterministic word inventories. Desk-corpus words are two or three
// syllables; the synthetic task families carry distinct marker prefixes
// so the three vocabularies never collide.
const std::vector<std::string>& syllables() {
  static const std::vector<std::string> s{"ba", "ce", "di", "fo", "gu", "ha", "ki", "lo", "mu",
                                          "ne", "pa", "re", "si", "to", "vu", "wa", "ye", "zo"};
  return s;
}

std::vector<std::string> make_words(const std::string& prefix, std::size_t count) {
  const auto& syl = syllables();
  std::vector<std::string> words;
  words.reserve(count);
  for (std::size_t i = 0; words.size() < count; ++i) {
    std::string w = prefix + syl[i % syl.size()] + syl[(i / syl.size()) % syl.size()];
    if (i >= syl.size() * syl.size()) w += syl[(i / (syl.size() * syl.size())) % syl.size()];
    words.push_back(std::move(w));
  }
  return words;
}

const std::vector<std::string>& desk_words() {
  static const std::vector<std::string> w = make_words("", 240);
  return w;
}

const std::vector<std::string>& family_a_words() {
  static const std::vector<std::string> w = make_words("q", 60);
  return w;
}

const std::vector<std::string>& family_b_words() {
  static const std::vector<std::string> w = make_words("j", 60);
  return w;
}

std::vector<std::string> sample_distinct(const std::vector<std::string>& pool, std::size_t k, Rng& rng) {
  auto idx = rng.sample_without_replacement(pool.size(), k);
  std::vector<std::string> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

struct PairShape {
  std::vector<std::string> a;
  std::vector<std::string> b;
};

// One sentence pair: b is either a subset of a's tokens or a subset with
// exactly one intruder word, which keeps negatives hard (near-subsets).
PairShape sample_pair(const std::vector<std::string>& family, bool subset, Rng& rng) {
  PairShape p;
  std::size_t a_len = static_cast<std::size_t>(rng.uniform_int(6, 10));
  p.a = sample_distinct(family, a_len, rng);
  std::size_t b_len = static_cast<std::size_t>(rng.uniform_int(3, 5));
  auto from_a = rng.sample_without_replacement(a_len, subset ? b_len : b_len - 1);
  for (auto i : from_a) p.b.push_back(p.a[i]);
  if (!subset) {
    std::unordered_set<std::string> in_a(p.a.begin(), p.a.end());
    while (true) {
      const std::string& w = family[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(family.size()) - 1))];
      if (!in_a.contains(w)) {
        p.b.push_back(w);
        break;
      }
    }
  }
  rng.shuffle(p.b);
  return p;
}

enum class SynthRule { subset, parity };

std::vector<Example> gen_pair_split(const std::string& guid_prefix, const std::vector<std::string>& family,
                                    SynthRule rule, std::size_t n, Rng& rng) {
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool want_positive = i % 2 == 0;
    Example ex;
    ex.guid = guid_prefix + "-" + std::to_string(i);
    if (rule == SynthRule::subset) {
      PairShape p = sample_pair(family, want_positive, rng);
      ex.text_a = std::move(p.a);
      ex.text_b = std::move(p.b);
      ex.label = subset_entails(ex.text_a, *ex.text_b) ? 1.0 : 0.0;
    } else {
      // Same input shapes (mixed subsets and near-subsets), labels by
      // length parity; b's length range {3,4,5} holds both parities, so
      // the target parity is reachable by a one-token nudge.
      PairShape p = sample_pair(family, rng.uniform() < 0.5, rng);
      bool even = (p.a.size() + p.b.size()) % 2 == 0;
      if (even != want_positive) {
        if (p.b.size() > 3) p.b.pop_back();
        else p.b.push_back(p.b.front());
      }
      ex.text_a = std::move(p.a);
      ex.text_b = std::move(p.b);
      ex.label = want_positive ? 1.0 : 0.0;
    }
    out.push_back(std::move(ex));
  }
  Rng order(rng.next_u64());
  order.shuffle(out);
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

const std::array<std::string, 5>& Vocab::specials() {
  static const std::array<std::string, 5> s{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return s;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? unk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size()) {
    throw ConfigError("vocab: id " + std::to_string(id) + " out of range");
  }
  return id_to_token[static_cast<std::size_t>(id)];
}

Vocab build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t max_size) {
  const auto& specials = Vocab::specials();
  if (max_size < specials.size()) {
    throw ConfigError("build_vocab: max_size " + std::to_string(max_size) + " below the " +
                      std::to_string(specials.size()) + " specials");
  }
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& sentence : corpus)
    for (const auto& token : sentence) ++freq[token];
  for (const auto& s : specials) freq.erase(s);

  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });

  Vocab v;
  for (const auto& s : specials) {
    v.token_to_id.emplace(s, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(s);
  }
  for (const auto& [token, count] : ranked) {
    if (v.id_to_token.size() >= max_size) break;
    v.token_to_id.emplace(token, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(token);
  }
  return v;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_vocab: cannot open " + path);
  for (const auto& token : vocab.id_to_token) out << token << '\n';
  if (!out.flush()) throw ConfigError("save_vocab: write failed for " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_vocab: cannot open " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.token_to_id.contains(line)) throw ConfigError("load_vocab: duplicate token '" + line + "'");
    v.token_to_id.emplace(line, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(line);
  }
  const auto& specials = Vocab::specials();
  if (v.id_to_token.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), v.id_to_token.begin())) {
    throw ConfigError("load_vocab: " + path + " does not start with the reserved specials");
  }
  return v;
}

std::vector<int> to_ids(const Vocab& vocab, std::span<const std::string> tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

void TaskSpec::validate() const {
  if (name.empty()) throw ConfigError("task: name must be non-empty");
  if (metrics.empty()) throw ConfigError("task '" + name + "': metric list must be non-empty");
  for (const auto& m : metrics) {
    if (!chance_scores.contains(m)) {
      throw ConfigError("task '" + name + "': no chance score for metric '" + m + "'");
    }
  }
  if (label_kind == LabelKind::classification && n_classes < 2) {
    throw ConfigError("task '" + name + "': classification needs at least 2 classes");
  }
}

void validate_dataset(const Dataset& dataset) {
  dataset.task.validate();
  auto check_split = [&](const char* split_name, const std::vector<Example>& split) {
    std::unordered_set<std::string> guids;
    for (std::size_t i = 0; i < split.size(); ++i) {
      const Example& ex = split[i];
      std::string where = dataset.task.name + " " + split_name + "[" + std::to_string(i) + "]";
      if (!guids.insert(ex.guid).second) throw ConfigError(where + ": duplicate guid '" + ex.guid + "'");
      if (ex.text_b.has_value() != (dataset.task.arity == Arity::pair)) {
        throw ConfigError(where + ": arity mismatch with task");
      }
      if (dataset.task.label_kind == LabelKind::classification) {
        if (ex.label != std::floor(ex.label) || ex.label < 0 ||
            ex.label >= static_cast<double>(dataset.task.n_classes)) {
          throw ConfigError(where + ": bad class label");
        }
      } else if (!std::isfinite(ex.label)) {
        throw ConfigError(where + ": non-finite regression label");
      }
    }
  };
  check_split("train", dataset.train);
  check_split("dev", dataset.dev);
  check_split("test", dataset.test);
}

std::vector<Example> load_tsv(const std::string& path, const TaskSpec& task, const ColumnMap& columns) {
  task.validate();
  if ((task.arity == Arity::pair) != (columns.text_b >= 0)) {
    throw ConfigError(path + ": column map arity mismatch for task '" + task.name + "' (text_b " +
                      (columns.text_b >= 0 ? "declared" : "missing") + ")");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_tsv: cannot open " + path);

  std::vector<Example> out;
  std::unordered_set<std::string> guids;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 && columns.has_header) continue;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    Example ex;
    ex.guid = columns.guid >= 0 ? field_at(fields, columns.guid, "guid", path, row)
                                : "row-" + std::to_string(row);
    ex.text_a = tokenize(field_at(fields, columns.text_a, "text_a", path, row));
    if (columns.text_b >= 0) ex.text_b = tokenize(field_at(fields, columns.text_b, "text_b", path, row));
    ex.label = parse_label(field_at(fields, columns.label, "label", path, row), task, path, row);
    if (!guids.insert(ex.guid).second) row_error(path, row, "duplicate guid '" + ex.guid + "'");
    out.push_back(std::move(ex));
  }
  return out;
}

void save_tsv(const std::string& path, const TaskSpec& task, std::span<const Example> split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_tsv: cannot open " + path);
  bool pair = task.arity == Arity::pair;
  out << "guid\ttext_a" << (pair ? "\ttext_b" : "") << "\tlabel\n";
  for (const Example& ex : split) {
    out << ex.guid << '\t' << detokenize(ex.text_a);
    if (pair) out << '\t' << detokenize(ex.text_b.value());
    out << '\t' << format_label(task, ex.label) << '\n';
  }
  if (!out.flush()) throw ConfigError("save_tsv: write failed for " + path);
}

std::vector<std::vector<std::string>> load_sentence_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_sentence_corpus: cannot open " + path);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = tokenize(line);
    if (!tokens.empty()) corpus.push_back(std::move(tokens));
  }
  return corpus;
}

void save_sentence_corpus(std::span<const std::vector<std::string>> corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_sentence_corpus: cannot open " + path);
  for (const auto& sentence : corpus) out << detokenize(sentence) << '\n';
  if (!out.flush()) throw ConfigError("save_sentence_corpus: write failed for " + path);
}

std::vector<Example> downsample(std::span<const Example> split, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw ConfigError("downsample: cap must be positive");
  std::vector<Example> out(split.begin(), split.end());
  std::sort(out.begin(), out.end(), [](const Example& x, const Example& y) { return x.guid < y.guid; });
  Rng rng(derive_seed(seed, "subsample"));
  rng.shuffle(out);
  if (out.size() > cap) out.resize(cap);
  return out;
}

std::pair<std::vector<Example>, std::vector<Example>> split_off_dev(std::span<const Example> examples,
                                                                    double dev_fraction, std::uint64_t seed) {
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
    throw ConfigError("split_off_dev: dev_fraction must be in [0, 1)");
  }
  std::vector<Example> all(examples.begin(), examples.end());
  std::sort(all.begin(), all.end(), [](const Example& x, const Example& y) { return x.guid < y.guid; });
  Rng rng(derive_seed(seed, "dev-split"));
  rng.shuffle(all);
  std::size_t n_dev = static_cast<std::size_t>(std::ceil(dev_fraction * static_cast<double>(all.size())));
  std::vector<Example> dev(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_dev));
  std::vector<Example> rest(all.begin() + static_cast<std::ptrdiff_t>(n_dev), all.end());
  return {std::move(rest), std::move(dev)};
}

std::vector<std::vector<std::string>> gen_desk_corpus(std::size_t n_sentences, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "desk-corpus"));
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i) {
    std::size_t len = static_cast<std::size_t>(rng.uniform_int(8, 16));
    corpus.push_back(sample_distinct(desk_words(), len, rng));
  }
  return corpus;
}

TaskSpec fake_sentence_task() {
  TaskSpec t;
  t.name = "fake-sent";
  t.arity = Arity::single;
  t.label_kind = LabelKind::classification;
  t.n_classes = 2;
  t.metrics = {kAccuracy};
  t.chance_scores = {{kAccuracy, 50.0}};
  return t;
}

std::vector<std::string> make_fake(std::span<const std::string> sentence, std::size_t k, Rng& rng) {
  if (2 * k > sentence.size()) {
    throw ConfigError("make_fake: sentence of " + std::to_string(sentence.size()) +
                      " tokens cannot host " + std::to_string(k) + " disjoint swaps");
  }
  std::vector<std::string> out(sentence.begin(), sentence.end());
  auto positions = rng.sample_without_replacement(sentence.size(), 2 * k);
  for (std::size_t i = 0; i < k; ++i) std::swap(out[positions[2 * i]], out[positions[2 * i + 1]]);
  return out;
}

Dataset gen_fake_sentences(std::span<const std::vector<std::string>> corpus, std::size_t n,
                           std::uint64_t seed) {
  if (n == 0 || n % 2 != 0) throw ConfigError("gen_fake_sentences: n must be positive and even");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].size() >= 8) eligible.push_back(i);
  if (eligible.empty()) {
    throw ConfigError("gen_fake_sentences: corpus has no sentence with the 8+ tokens needed for fakes");
  }

  Rng rng(derive_seed(seed, "fake-gen"));
  Dataset ds;
  ds.task = fake_sentence_task();
  ds.train.reserve(n);

  for (std::size_t i = 0; i < n / 2; ++i) {
    const auto& sentence = corpus[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(corpus.size()) - 1))];
    Example ex;
    ex.guid = "real-" + std::to_string(i);
    ex.text_a = sentence;
    ex.label = 1.0;
    ds.train.push_back(std::move(ex));
  }

  std::size_t budget = 10 * n + 1000;  // guards against all-degenerate corpora
  for (std::size_t i = 0; i < n / 2; ++i) {
    std::vector<std::string> fake;
    while (fake.empty()) {
      if (budget-- == 0) {
        throw ConfigError("gen_fake_sentences: corpus too repetitive to yield distinct fakes");
      }
      const auto& sentence = corpus[eligible[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(eligible.size()) - 1))]];
      for (int attempt = 0; attempt < 10; ++attempt) {
        std::size_t k = static_cast<std::size_t>(rng.uniform_int(2, 4));
        auto candidate = make_fake(sentence, k, rng);
        if (!std::equal(candidate.begin(), candidate.end(), sentence.begin())) {
          fake = std::move(candidate);
          break;
        }
      }
    }
    Example ex;
    ex.guid = "fake-" + std::to_string(i);
    ex.text_a = std::move(fake);
    ex.label = 0.0;
    ds.train.push_back(std::move(ex));
  }
  rng.shuffle(ds.train);
  return ds;
}

bool subset_entails(std::span<const std::string> a, std::span<const std::string> b) {
  std::unordered_set<std::string_view> in_a(a.begin(), a.end());
  for (const auto& token : b)
    if (!in_a.contains(token)) return false;
  return true;
}

SynthPair gen_synthetic_pair_tasks(std::uint64_t grammar_seed, Relatedness relatedness) {
  SynthPair out;

  TaskSpec base;
  base.arity = Arity::pair;
  base.label_kind = LabelKind::classification;
  base.n_classes = 2;
  base.metrics = {kAccuracy};
  base.chance_scores = {{kAccuracy, 50.0}};

  out.intermediate.task = base;
  out.intermediate.task.name =
      relatedness == Relatedness::related ? "synth-int-related" : "synth-int-parity";
  out.target.task = base;
  out.target.task.name = "synth-target";

  SynthRule int_rule = relatedness == Relatedness::related ? SynthRule::subset : SynthRule::parity;
  Rng int_rng(derive_seed(grammar_seed, "synth-intermediate"));
  out.intermediate.train =
      gen_pair_split(out.intermediate.task.name + "-train", family_a_words(), int_rule, 2000, int_rng);
  out.intermediate.dev =
      gen_pair_split(out.intermediate.task.name + "-dev", family_a_words(), int_rule, 400, int_rng);

  Rng tgt_rng(derive_seed(grammar_seed, "synth-target"));
  out.target.train =
      gen_pair_split(out.target.task.name + "-train", family_b_words(), SynthRule::subset, 1200, tgt_rng);
  out.target.dev =
      gen_pair_split(out.target.task.name + "-dev", family_b_words(), SynthRule::subset, 600, tgt_rng);
  return out;
}

std::vector<std::vector<std::string>> synth_vocabulary_corpus() {
  std::vector<std::vector<std::string>> out;
  out.push_back(family_a_words());
  out.push_back(family_b_words());
  out.push_back(desk_words());
  return out;
}

}  // namespace stilts
