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
#ifndef STILTS_STORE_HPP
#define STILTS_STORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stilts/harness.hpp"
#include "stilts/pipeline.hpp"

namespace stilts {

// ------------------------------------------------------------- hashing

std::uint64_t fnv1a64(std::string_view text);

/// 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view text);

// --------------------------------------------------------- checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Where a parameter set came from: the phases applied in order (e.g.
/// "pretrain", "intermediate:synth-inter", "target:synth-target"), the
/// seeds that drove them, and the manifest that configured the run.
struct Provenance {
  std::vector<std::string> phases;
  std::vector<std::uint64_t> seeds;
  std::string manifest_hash;

  bool operator==(const Provenance&) const = default;
};

struct LoadedCheckpoint {
  EncoderParams params;
  Provenance provenance;
};

/// `STLT` magic, u32 version, u64 header length, JSON header (config,
/// tensor index, provenance), then every tensor's float64 payload in
/// canonical for_each order. Little-endian throughout.
void save_checkpoint(const EncoderParams& params, const Provenance& provenance,
                     const std::string& path);

/// Bit-exact inverse of save_checkpoint. Bad magic, a version or size
/// mismatch, or an index inconsistency is rejected with a named cause;
/// nothing partial is ever returned.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// load_checkpoint, then reject (never coerce) a config that differs
/// from `expect`.
LoadedCheckpoint load_checkpoint(const std::string& path, const EncoderConfig& expect);

// ------------------------------------------------------------- results

/// One result line: the record plus the manifest hash stamped on it.
struct StoredRecord {
  RunRecord record;
  std::string manifest_hash;

  bool operator==(const StoredRecord&) const = default;
};

/// Single-line JSON document, sorted keys, full float precision.
std::string run_record_json(const RunRecord& rec, const std::string& manifest_hash);

StoredRecord stored_record_from_json(const std::string& line);

/// Appends one record as one line. The line goes out in a single
/// O_APPEND write, so concurrent appenders interleave whole lines.
void append_result(const RunRecord& rec, const std::string& manifest_hash, const std::string& path);

std::vector<StoredRecord> load_results(const std::string& path);

/// All records must carry the same manifest hash; mixing experiments in
/// one report is rejected.
std::vector<RunRecord> require_single_manifest(std::span<const StoredRecord> records);

// ------------------------------------------------------------ manifest

/// One task the experiment can reference: either a generator spec or a
/// TSV pair with an inline TaskSpec.
struct TaskSource {
  std::string name;
  std::string generator;  // synth-intermediate | synth-target | fake-sentences | tsv
  Relatedness relatedness = Relatedness::related;
  std::uint64_t seed = 0;
  std::size_t fake_n = 2000;            // fake-sentences: total examples
  std::string corpus = "desk";          // fake-sentences: corpus source
  std::string train_path, dev_path;     // tsv
  TaskSpec spec;                        // tsv: inline task definition
  ColumnMap columns;                    // tsv layout

  bool operator==(const TaskSource&) const = default;
};

struct PlanSpec {
  Regime regime = Regime::baseline;
  std::optional<std::string> intermediate;
  std::string target;
  std::vector<PhaseConfig> phases;

  bool operator==(const PlanSpec&) const = default;
};

/// Everything that determines an experiment. Two runs of the same
/// manifest on the same build produce identical result files. Tasks
/// are keyed by name in the document and kept sorted by name here.
struct Manifest {
  EncoderConfig encoder;
  std::string vocab_source = "synth";  // synth | desk | file path
  std::size_t vocab_max = 400;
  std::string corpus_source = "desk";  // desk | file path
  std::size_t corpus_sentences = 50;
  std::uint64_t corpus_seed = 0;
  PhaseConfig pretrain;
  std::vector<TaskSource> tasks;
  std::vector<PlanSpec> plans;
  int restarts = 20;
  std::optional<std::size_t> cap;
  std::uint64_t seed = 1;
  int workers = 1;
  double epsilon = kDegenerateEpsilon;
  std::string out_dir = "results";
  std::map<std::string, std::string> overrides;  // echoed --set pairs

  bool operator==(const Manifest&) const = default;
};

/// Parses a manifest document. Overrides are dotted paths applied to
/// the document before parsing ("encoder.d_model=32", "cap=null") and
/// echoed into the manifest so artifacts stay self-describing. Unknown
/// keys anywhere are rejected.
Manifest manifest_from_json(const std::string& text,
                            const std::map<std::string, std::string>& overrides = {});

Manifest load_manifest(const std::string& path,
                       const std::map<std::string, std::string>& overrides = {});

/// Canonical form: every field explicit, keys sorted, shortest
/// round-trip float formatting. Input formatting never leaks through.
std::string manifest_json(const Manifest& m);

/// fnv1a64_hex of manifest_json; stamped on every artifact.
std::string manifest_hash(const Manifest& m);

}  // namespace stilts

#endif  // STILTS_STORE_HPP
