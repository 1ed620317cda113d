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
#include "stilts/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "stilts/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace stilts {

using nlohmann::json;

namespace {

// ------------------------------------------------------------- helpers

[[noreturn]] void bad_json(const char* what, const std::exception& e) {
  throw ConfigError(std::string(what) + ": " + e.what());
}

/// Strict-schema guard: typos and stale keys fail loudly.
void require_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

const char* arity_name(Arity a) { return a == Arity::single ? "single" : "pair"; }

Arity arity_from_name(const std::string& name) {
  if (name == "single") return Arity::single;
  if (name == "pair") return Arity::pair;
  throw ConfigError("unknown arity '" + name + "'");
}

const char* label_kind_name(LabelKind k) {
  return k == LabelKind::classification ? "classification" : "regression";
}

LabelKind label_kind_from_name(const std::string& name) {
  if (name == "classification") return LabelKind::classification;
  if (name == "regression") return LabelKind::regression;
  throw ConfigError("unknown label_kind '" + name + "'");
}

const char* relatedness_name(Relatedness r) {
  return r == Relatedness::related ? "related" : "unrelated";
}

Relatedness relatedness_from_name(const std::string& name) {
  if (name == "related") return Relatedness::related;
  if (name == "unrelated") return Relatedness::unrelated;
  throw ConfigError("unknown relatedness '" + name + "'");
}

json encoder_to_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"max_len", c.max_len},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},
              {"dropout_rate", c.dropout_rate},
              {"pooling", pooling_name(c.pooling)},
              {"objective_style", objective_style_name(c.objective_style)}};
}

EncoderConfig encoder_from_json(const json& j) {
  require_keys(j,
               {"vocab_size", "max_len", "d_model", "n_heads", "n_layers", "dropout_rate", "pooling",
                "objective_style"},
               "encoder");
  EncoderConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  if (j.contains("pooling")) c.pooling = pooling_from_name(j.at("pooling").get<std::string>());
  if (j.contains("objective_style")) {
    c.objective_style = objective_style_from_name(j.at("objective_style").get<std::string>());
  }
  return c;
}

json phase_to_json(const PhaseConfig& p) {
  json j{{"objective", objective_name(p.objective)},
         {"aux_lm_weight", p.aux_lm_weight},
         {"epochs", p.epochs},
         {"batch_size", p.batch_size},
         {"base_lr", p.base_lr},
         {"warmup_fraction", p.warmup_fraction},
         {"seed", p.seed}};
  j["train_cap"] = p.train_cap.has_value() ? json(*p.train_cap) : json(nullptr);
  return j;
}

PhaseConfig phase_from_json(const json& j) {
  require_keys(j,
               {"objective", "aux_lm_weight", "epochs", "batch_size", "base_lr", "warmup_fraction",
                "seed", "train_cap"},
               "phase");
  PhaseConfig p;
  if (j.contains("objective")) p.objective = objective_from_name(j.at("objective").get<std::string>());
  p.aux_lm_weight = j.value("aux_lm_weight", p.aux_lm_weight);
  p.epochs = j.value("epochs", p.epochs);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.base_lr = j.value("base_lr", p.base_lr);
  p.warmup_fraction = j.value("warmup_fraction", p.warmup_fraction);
  p.seed = j.value("seed", p.seed);
  if (j.contains("train_cap") && !j.at("train_cap").is_null()) {
    p.train_cap = j.at("train_cap").get<std::size_t>();
  }
  return p;
}

json columns_to_json(const ColumnMap& c) {
  return json{{"has_header", c.has_header},
              {"guid", c.guid},
              {"text_a", c.text_a},
              {"text_b", c.text_b},
              {"label", c.label}};
}

ColumnMap columns_from_json(const json& j) {
  require_keys(j, {"has_header", "guid", "text_a", "text_b", "label"}, "columns");
  ColumnMap c;
  c.has_header = j.value("has_header", c.has_header);
  c.guid = j.value("guid", c.guid);
  c.text_a = j.value("text_a", c.text_a);
  c.text_b = j.value("text_b", c.text_b);
  c.label = j.value("label", c.label);
  return c;
}

json task_to_json(const TaskSource& t) {
  json j{{"generator", t.generator}};
  if (t.generator == "tsv") {
    j["train"] = t.train_path;
    j["dev"] = t.dev_path;
    j["arity"] = arity_name(t.spec.arity);
    j["label_kind"] = label_kind_name(t.spec.label_kind);
    j["n_classes"] = t.spec.n_classes;
    j["metrics"] = t.spec.metrics;
    j["chance"] = t.spec.chance_scores;
    j["columns"] = columns_to_json(t.columns);
  } else if (t.generator == "fake-sentences") {
    j["seed"] = t.seed;
    j["n"] = t.fake_n;
    j["corpus"] = t.corpus;
  } else {
    j["seed"] = t.seed;
    j["relatedness"] = relatedness_name(t.relatedness);
  }
  return j;
}

TaskSource task_from_json(const std::string& name, const json& j) {
  require_keys(j,
               {"generator", "relatedness", "seed", "n", "corpus", "train", "dev", "arity",
                "label_kind", "n_classes", "metrics", "chance", "columns"},
               ("task '" + name + "'").c_str());
  TaskSource t;
  t.name = name;
  if (!j.contains("generator")) throw ConfigError("task '" + name + "' needs a generator");
  t.generator = j.at("generator").get<std::string>();
  if (t.generator == "tsv") {
    t.train_path = j.value("train", std::string{});
    t.dev_path = j.value("dev", std::string{});
    if (t.train_path.empty()) throw ConfigError("tsv task '" + name + "' needs a train path");
    t.spec.name = name;
    if (j.contains("arity")) t.spec.arity = arity_from_name(j.at("arity").get<std::string>());
    if (j.contains("label_kind")) {
      t.spec.label_kind = label_kind_from_name(j.at("label_kind").get<std::string>());
    }
    t.spec.n_classes = j.value("n_classes", t.spec.n_classes);
    if (j.contains("metrics")) t.spec.metrics = j.at("metrics").get<std::vector<std::string>>();
    if (j.contains("chance")) {
      t.spec.chance_scores = j.at("chance").get<std::map<std::string, double>>();
    }
    if (j.contains("columns")) t.columns = columns_from_json(j.at("columns"));
    t.spec.validate();
  } else if (t.generator == "fake-sentences") {
    t.seed = j.value("seed", t.seed);
    t.fake_n = j.value("n", t.fake_n);
    t.corpus = j.value("corpus", t.corpus);
  } else if (t.generator == "synth-intermediate" || t.generator == "synth-target") {
    t.seed = j.value("seed", t.seed);
    if (j.contains("relatedness")) {
      t.relatedness = relatedness_from_name(j.at("relatedness").get<std::string>());
    }
  } else {
    throw ConfigError("task '" + name + "' has unknown generator '" + t.generator + "'");
  }
  return t;
}

json plan_to_json(const PlanSpec& p) {
  json j{{"regime", regime_name(p.regime)}, {"target", p.target}};
  j["intermediate"] = p.intermediate.has_value() ? json(*p.intermediate) : json(nullptr);
  json phases = json::array();
  for (const PhaseConfig& phase : p.phases) phases.push_back(phase_to_json(phase));
  j["phases"] = phases;
  return j;
}

PlanSpec plan_from_json(const json& j) {
  require_keys(j, {"regime", "intermediate", "target", "phases"}, "plan");
  PlanSpec p;
  if (j.contains("regime")) p.regime = regime_from_name(j.at("regime").get<std::string>());
  if (j.contains("intermediate") && !j.at("intermediate").is_null()) {
    p.intermediate = j.at("intermediate").get<std::string>();
  }
  if (!j.contains("target")) throw ConfigError("plan needs a target task");
  p.target = j.at("target").get<std::string>();
  if (j.contains("phases")) {
    for (const json& phase : j.at("phases")) p.phases.push_back(phase_from_json(phase));
  }
  return p;
}

json record_to_json(const RunRecord& rec, const std::string& manifest_hash) {
  json j;
  j["regime"] = regime_name(rec.regime);
  j["intermediate"] = rec.intermediate.has_value() ? json(*rec.intermediate) : json(nullptr);
  j["target"] = rec.target;
  j["seed"] = rec.seed;
  j["cap"] = rec.cap.has_value() ? json(*rec.cap) : json(nullptr);
  j["train_size"] = rec.train_size;
  j["dev_scores"] = rec.dev_scores;
  j["primary_score"] = rec.primary_score;
  j["degenerate"] = rec.degenerate;
  j["aborted"] = rec.aborted;
  j["wall_seconds"] = rec.wall_seconds;
  j["manifest"] = manifest_hash;
  return j;
}

// --------------------------------------------------------- binary bits

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint32_t get_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + at, 4);
  return v;
}

std::uint64_t get_u64(const std::string& bytes, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + at, 8);
  return v;
}

}  // namespace

// ------------------------------------------------------------- hashing

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string fnv1a64_hex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

// --------------------------------------------------------- checkpoints

void save_checkpoint(const EncoderParams& params, const Provenance& provenance,
                     const std::string& path) {
  json header;
  header["config"] = encoder_to_json(params.config);
  header["provenance"] = json{{"phases", provenance.phases},
                              {"seeds", provenance.seeds},
                              {"manifest_hash", provenance.manifest_hash}};
  json index = json::array();
  std::size_t total = 0;
  params.for_each([&](const std::string& name, const Tensor& t) {
    index.push_back(json{{"name", name}, {"shape", t.shape()}, {"offset", total}});
    total += t.size();
  });
  header["tensors"] = std::move(index);
  header["payload_doubles"] = total;
  const std::string text = header.dump();

  std::string blob;
  blob.reserve(16 + text.size() + total * sizeof(double));
  blob += "STLT";
  put_u32(blob, kCheckpointVersion);
  put_u64(blob, text.size());
  blob += text;
  params.for_each([&](const std::string&, const Tensor& t) {
    blob.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out) throw RunAbort("save_checkpoint: cannot write '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_checkpoint: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();

  if (bytes.size() < 16) throw ConfigError("load_checkpoint: truncated file (no header)");
  if (bytes.compare(0, 4, "STLT") != 0) throw ConfigError("load_checkpoint: bad magic, not a checkpoint");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw ConfigError("load_checkpoint: unsupported version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (16 + header_len > bytes.size()) throw ConfigError("load_checkpoint: truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    bad_json("load_checkpoint: header is not valid JSON", e);
  }

  LoadedCheckpoint out;
  std::uint64_t total = 0;
  try {
    require_keys(header, {"config", "provenance", "tensors", "payload_doubles"}, "checkpoint header");
    EncoderConfig config = encoder_from_json(header.at("config"));
    const json& prov = header.at("provenance");
    require_keys(prov, {"phases", "seeds", "manifest_hash"}, "checkpoint provenance");
    out.provenance.phases = prov.at("phases").get<std::vector<std::string>>();
    out.provenance.seeds = prov.at("seeds").get<std::vector<std::uint64_t>>();
    out.provenance.manifest_hash = prov.at("manifest_hash").get<std::string>();
    total = header.at("payload_doubles").get<std::uint64_t>();

    const std::size_t payload_bytes = bytes.size() - 16 - header_len;
    if (payload_bytes != total * sizeof(double)) {
      throw ConfigError("load_checkpoint: payload size mismatch (truncated or trailing data)");
    }

    out.params = init_params(config, 0);
    const json& tensors = header.at("tensors");
    std::size_t entry = 0;
    std::size_t cursor = 0;
    const char* payload = bytes.data() + 16 + header_len;
    out.params.for_each([&](const std::string& name, Tensor& t) {
      if (entry >= tensors.size()) {
        throw ConfigError("load_checkpoint: index mismatch, missing tensor '" + name + "'");
      }
      const json& e = tensors.at(entry);
      require_keys(e, {"name", "shape", "offset"}, "checkpoint tensor entry");
      if (e.at("name").get<std::string>() != name ||
          e.at("shape").get<std::vector<std::size_t>>() != t.shape() ||
          e.at("offset").get<std::size_t>() != cursor) {
        throw ConfigError("load_checkpoint: index mismatch at tensor '" + name + "'");
      }
      std::memcpy(t.data(), payload + cursor * sizeof(double), t.size() * sizeof(double));
      cursor += t.size();
      ++entry;
    });
    if (entry != tensors.size() || cursor != total) {
      throw ConfigError("load_checkpoint: index mismatch, extra tensor entries");
    }
  } catch (const json::exception& e) {
    bad_json("load_checkpoint: malformed header field", e);
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const EncoderConfig& expect) {
  LoadedCheckpoint out = load_checkpoint(path);
  if (!(out.params.config == expect)) {
    throw ConfigError("load_checkpoint: '" + path +
                      "' was saved under a different encoder config; refusing to coerce");
  }
  return out;
}

// ------------------------------------------------------------- results

std::string run_record_json(const RunRecord& rec, const std::string& manifest_hash) {
  return record_to_json(rec, manifest_hash).dump();
}

StoredRecord stored_record_from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
    require_keys(j,
                 {"regime", "intermediate", "target", "seed", "cap", "train_size", "dev_scores",
                  "primary_score", "degenerate", "aborted", "wall_seconds", "manifest"},
                 "result record");
    StoredRecord out;
    out.record.regime = regime_from_name(j.at("regime").get<std::string>());
    if (!j.at("intermediate").is_null()) {
      out.record.intermediate = j.at("intermediate").get<std::string>();
    }
    out.record.target = j.at("target").get<std::string>();
    out.record.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("cap").is_null()) out.record.cap = j.at("cap").get<std::size_t>();
    out.record.train_size = j.at("train_size").get<std::size_t>();
    out.record.dev_scores = j.at("dev_scores").get<std::map<std::string, double>>();
    out.record.primary_score = j.at("primary_score").get<double>();
    out.record.degenerate = j.at("degenerate").get<bool>();
    out.record.aborted = j.at("aborted").get<bool>();
    out.record.wall_seconds = j.at("wall_seconds").get<double>();
    out.manifest_hash = j.at("manifest").get<std::string>();
    return out;
  } catch (const json::exception& e) {
    bad_json("result record is not valid JSON", e);
  }
}

void append_result(const RunRecord& rec, const std::string& manifest_hash, const std::string& path) {
  const std::string line = run_record_json(rec, manifest_hash) + "\n";

  static std::mutex append_mu;
  std::lock_guard<std::mutex> lock(append_mu);
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw RunAbort("append_result: cannot open '" + path + "': " + std::strerror(errno));
  }
  // One write call per record keeps concurrent lines whole.
  const ssize_t wrote = ::write(fd, line.data(), line.size());
  const int saved = errno;
  ::close(fd);
  if (wrote != static_cast<ssize_t>(line.size())) {
    throw RunAbort("append_result: short write to '" + path + "': " + std::strerror(saved));
  }
}

std::vector<StoredRecord> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_results: cannot open '" + path + "'");
  std::vector<StoredRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(stored_record_from_json(line));
    } catch (const ConfigError& e) {
      throw ConfigError("load_results: '" + path + "' line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return out;
}

std::vector<RunRecord> require_single_manifest(std::span<const StoredRecord> records) {
  std::vector<RunRecord> out;
  for (const StoredRecord& stored : records) {
    if (!out.empty() && stored.manifest_hash != records.front().manifest_hash) {
      throw ConfigError("results mix manifests '" + records.front().manifest_hash + "' and '" +
                        stored.manifest_hash + "'; one report covers one experiment");
    }
    out.push_back(stored.record);
  }
  return out;
}

// ------------------------------------------------------------ manifest

Manifest manifest_from_json(const std::string& text,
                            const std::map<std::string, std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    bad_json("manifest is not valid JSON", e);
  }

  try {
    for (const auto& [key, value] : overrides) {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // bare words are strings
      }
      std::string pointer = "/" + key;
      for (char& c : pointer) {
        if (c == '.') c = '/';
      }
      doc[json::json_pointer(pointer)] = parsed;
      doc["overrides"][key] = value;
    }

    require_keys(doc,
                 {"encoder", "vocab", "corpus", "pretrain", "tasks", "plans", "restarts", "cap",
                  "seed", "workers", "epsilon", "out_dir", "overrides"},
                 "manifest");
    Manifest m;
    if (doc.contains("encoder")) m.encoder = encoder_from_json(doc.at("encoder"));
    if (doc.contains("vocab")) {
      const json& v = doc.at("vocab");
      require_keys(v, {"source", "max_size"}, "vocab");
      m.vocab_source = v.value("source", m.vocab_source);
      m.vocab_max = v.value("max_size", m.vocab_max);
    }
    if (doc.contains("corpus")) {
      const json& c = doc.at("corpus");
      require_keys(c, {"source", "sentences", "seed"}, "corpus");
      m.corpus_source = c.value("source", m.corpus_source);
      m.corpus_sentences = c.value("sentences", m.corpus_sentences);
      m.corpus_seed = c.value("seed", m.corpus_seed);
    }
    if (doc.contains("pretrain")) m.pretrain = phase_from_json(doc.at("pretrain"));
    if (doc.contains("tasks")) {
      for (const auto& item : doc.at("tasks").items()) {
        m.tasks.push_back(task_from_json(item.key(), item.value()));
      }
    }
    if (doc.contains("plans")) {
      for (const json& plan : doc.at("plans")) m.plans.push_back(plan_from_json(plan));
    }
    m.restarts = doc.value("restarts", m.restarts);
    if (doc.contains("cap") && !doc.at("cap").is_null()) m.cap = doc.at("cap").get<std::size_t>();
    m.seed = doc.value("seed", m.seed);
    m.workers = doc.value("workers", m.workers);
    m.epsilon = doc.value("epsilon", m.epsilon);
    m.out_dir = doc.value("out_dir", m.out_dir);
    if (doc.contains("overrides")) {
      m.overrides = doc.at("overrides").get<std::map<std::string, std::string>>();
    }
    return m;
  } catch (const json::exception& e) {
    bad_json("malformed manifest field", e);
  }
}

Manifest load_manifest(const std::string& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_manifest: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return manifest_from_json(buffer.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError("load_manifest: '" + path + "': " + e.what());
  }
}

std::string manifest_json(const Manifest& m) {
  json doc;
  doc["encoder"] = encoder_to_json(m.encoder);
  doc["vocab"] = json{{"source", m.vocab_source}, {"max_size", m.vocab_max}};
  doc["corpus"] =
      json{{"source", m.corpus_source}, {"sentences", m.corpus_sentences}, {"seed", m.corpus_seed}};
  doc["pretrain"] = phase_to_json(m.pretrain);
  json tasks = json::object();
  for (const TaskSource& t : m.tasks) tasks[t.name] = task_to_json(t);
  doc["tasks"] = std::move(tasks);
  json plans = json::array();
  for (const PlanSpec& p : m.plans) plans.push_back(plan_to_json(p));
  doc["plans"] = std::move(plans);
  doc["restarts"] = m.restarts;
  doc["cap"] = m.cap.has_value() ? json(*m.cap) : json(nullptr);
  doc["seed"] = m.seed;
  doc["workers"] = m.workers;
  doc["epsilon"] = m.epsilon;
  doc["out_dir"] = m.out_dir;
  doc["overrides"] = m.overrides;
  return doc.dump(2) + "\n";
}

std::string manifest_hash(const Manifest& m) { return fnv1a64_hex(manifest_json(m)); }

}  // namespace stilts
