#pragma once

// Experiment commands behind the command-line tool. Each command returns the
// records it emitted; a record with "status":"error" marks a failed run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klcbl/checkpoint.hpp"
#include "klcbl/data.hpp"
#include "klcbl/model.hpp"

namespace klcbl {

enum class Precision { kF32, kF64 };

Precision parse_precision(std::string_view name);
std::string_view precision_name(Precision p);

struct ExperimentSpec {
  std::string name = "klcbl";
  /// Dataset file (`id<TAB>label<TAB>text`); used with the hash embedder.
  std::filesystem::path data;
  /// Size of the generated dataset when `data` is empty.
  std::size_t synthetic = 0;
  /// "hash" embeds `data` on the fly; "file" reads `embeddings`.
  std::string embedding_source = "hash";
  std::filesystem::path embeddings;
  std::size_t max_tokens = kDefaultMaxTokens;
  ModelConfig model;
  TrainConfig train;
  Precision precision = Precision::kF32;
  /// Sweep axis ("lr" or "batch") and values; empty values take the default grid.
  std::string sweep_axis = "lr";
  std::vector<double> sweep_values;
  /// Where artifacts go; not part of the recorded configuration.
  std::filesystem::path out_dir = "out";

  void validate() const;
};

/// Everything except out_dir, with defaults filled in.
nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& j);

/// Reads a spec file, or the spec embedded in the first record of a report.
ExperimentSpec load_spec(const std::filesystem::path& path);

struct LoadedData {
  std::vector<EmbeddedExample> train;
  std::vector<EmbeddedExample> valid;
  std::vector<EmbeddedExample> test;
  DatasetSplit split;
  EmbeddingSource source;
};

/// Reads or generates the dataset, embeds it, and applies the seeded 8:1:1
/// split. Needs at least 10 examples so that every part is non-empty.
LoadedData load_data(const ExperimentSpec& spec);

struct CommandResult {
  std::vector<nlohmann::json> records;
  /// Human-readable output (tables, predictions).
  std::string text;

  bool ok() const;
};

/// Split, fit, test metrics. Writes checkpoint.bin, report.jsonl and
/// summary.txt under spec.out_dir.
CommandResult cmd_train(const ExperimentSpec& spec);

/// Test-split metrics of a saved model on the spec's data.
CommandResult cmd_eval(const ExperimentSpec& spec, const std::filesystem::path& checkpoint);

struct PredictInput {
  /// `id<TAB>text` lines, embedded with the checkpoint's hash settings.
  std::filesystem::path text;
  /// Or an embedding interchange file.
  std::filesystem::path embeddings;
};

/// One {id, class, probs} record per input example, in input order. Writes
/// predictions.jsonl under out_dir.
CommandResult cmd_predict(const std::filesystem::path& checkpoint, const PredictInput& input,
                          const std::filesystem::path& out_dir);

struct AblationVariant {
  std::string key;    // "full", "no_cnn", "no_bilstm", "dense_head", "kan_head"
  std::string label;  // table row label
  ModelConfig model;
};

/// The five variants in table order, each differing from `base` only in the
/// ablated field (and the head input width that follows from it).
std::vector<AblationVariant> ablation_variants(const ModelConfig& base);

/// Trains every variant on one shared split; writes report.jsonl and
/// summary.txt with the comparison table and the KAN minus dense delta.
CommandResult cmd_ablate(const ExperimentSpec& spec);

std::vector<double> default_sweep_values(std::string_view axis);

/// One run per value of `axis` ("lr" or "batch"); writes report.jsonl,
/// summary.txt and sweep.tsv (one line per value and epoch).
CommandResult cmd_sweep(const ExperimentSpec& spec, const std::string& axis, const std::vector<double>& values);

/// Metrics table of the records in a report.jsonl file (or a directory
/// holding one).
CommandResult cmd_export_report(const std::filesystem::path& report);

/// Worker count for independent jobs: hardware concurrency capped by the
/// KLCBL_THREADS environment variable.
std::size_t worker_threads();

}  // namespace klcbl
