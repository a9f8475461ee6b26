#include "klcbl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "klcbl/serialize.hpp"
#include "klcbl/synthetic.hpp"

namespace klcbl {

using json = nlohmann::json;
namespace fs = std::filesystem;

Precision parse_precision(std::string_view name) {
  if (name == "f32") return Precision::kF32;
  if (name == "f64") return Precision::kF64;
  throw ConfigError("precision must be f32 or f64, got '" + std::string(name) + "'");
}

std::string_view precision_name(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

void ExperimentSpec::validate() const {
  if (name.empty()) throw ConfigError("experiment name must not be empty");
  if (embedding_source == "hash") {
    if (data.empty() && synthetic == 0) throw ConfigError("no dataset: set 'data' or 'synthetic'");
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
  } else if (embedding_source == "file") {
    if (embeddings.empty()) throw ConfigError("embedding source 'file' needs an 'embeddings' path");
  } else {
    throw ConfigError("embedding_source must be hash or file, got '" + embedding_source + "'");
  }
  if (sweep_axis != "lr" && sweep_axis != "batch") {
    throw ConfigError("sweep axis must be lr or batch, got '" + sweep_axis + "'");
  }
  model.validate();
  train.validate();
}

json spec_to_json(const ExperimentSpec& spec) {
  return {{"name", spec.name},
          {"data", spec.data.generic_string()},
          {"synthetic", spec.synthetic},
          {"embedding_source", spec.embedding_source},
          {"embeddings", spec.embeddings.generic_string()},
          {"max_tokens", spec.max_tokens},
          {"model", spec.model},
          {"train", spec.train},
          {"precision", precision_name(spec.precision)},
          {"sweep", {{"axis", spec.sweep_axis}, {"values", spec.sweep_values}}}};
}

ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  static const std::vector<std::string> known = {"name",       "data",  "synthetic", "embedding_source",
                                                 "embeddings", "max_tokens", "model", "train",
                                                 "precision",  "sweep", "out_dir"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in experiment spec");
    }
  }
  ExperimentSpec spec;
  try {
    if (j.contains("name")) spec.name = j.at("name").get<std::string>();
    if (j.contains("data")) spec.data = j.at("data").get<std::string>();
    if (j.contains("synthetic")) spec.synthetic = j.at("synthetic").get<std::size_t>();
    if (j.contains("embedding_source")) spec.embedding_source = j.at("embedding_source").get<std::string>();
    if (j.contains("embeddings")) spec.embeddings = j.at("embeddings").get<std::string>();
    if (j.contains("max_tokens")) spec.max_tokens = j.at("max_tokens").get<std::size_t>();
    if (j.contains("precision")) spec.precision = parse_precision(j.at("precision").get<std::string>());
    if (j.contains("out_dir")) spec.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      for (const auto& [key, value] : s.items()) {
        if (key != "axis" && key != "values") throw ConfigError("unknown key '" + key + "' in sweep");
      }
      if (s.contains("axis")) spec.sweep_axis = s.at("axis").get<std::string>();
      if (s.contains("values")) spec.sweep_values = s.at("values").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment spec: ") + e.what());
  }
  if (j.contains("model")) spec.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) spec.train = j.at("train").get<TrainConfig>();
  return spec;
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    // a report.jsonl: take the first record
    const auto first = text.substr(0, text.find('\n'));
    j = json::parse(first, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path.string() + "' is neither JSON nor a report");
  }
  if (j.is_object() && j.contains("spec")) return spec_from_json(j.at("spec"));
  return spec_from_json(j);
}

LoadedData load_data(const ExperimentSpec& spec) {
  LoadedData out;
  std::vector<EmbeddedExample> all;
  if (spec.embedding_source == "file") {
    all = read_embedding_file(spec.embeddings);
    const std::size_t dim = all.empty() ? spec.model.embedding_dim : all.front().dim;
    if (dim != spec.model.embedding_dim) {
      throw ConfigError("embedding file '" + spec.embeddings.string() + "' has dim " + std::to_string(dim) +
                        ", model expects embedding_dim " + std::to_string(spec.model.embedding_dim));
    }
    out.source = {"file", dim, 0};
  } else {
    const auto raw = spec.data.empty() ? make_synthetic_dataset(spec.synthetic, spec.train.seed) : read_dataset(spec.data);
    all = embed_dataset(raw, spec.model.embedding_dim, spec.max_tokens);
    out.source = {"hash", spec.model.embedding_dim, spec.max_tokens};
  }
  if (all.size() < 10) {
    throw ConfigError("dataset has " + std::to_string(all.size()) + " examples; at least 10 are needed for an 8:1:1 split");
  }
  std::vector<std::string> ids;
  ids.reserve(all.size());
  for (const auto& ex : all) ids.push_back(ex.id);
  out.split = split_ids(std::move(ids), spec.train.seed);
  out.train = select(all, out.split.train);
  out.valid = select(all, out.split.valid);
  out.test = select(all, out.split.test);
  return out;
}

bool CommandResult::ok() const {
  return std::none_of(records.begin(), records.end(),
                      [](const json& r) { return r.value("status", std::string("ok")) == "error"; });
}

std::size_t worker_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("KLCBL_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

json error_record(const std::string& run_id, const std::string& message) {
  return {{"run_id", run_id}, {"status", "error"}, {"error", message}};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string jsonl(const std::vector<json>& records) {
  std::string s;
  for (const auto& r : records) s += r.dump() + '\n';
  return s;
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", s);
  return buf;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Fingerprint of the exact partition, so runs can be checked to share it.
std::string split_hash(const DatasetSplit& split) {
  return json_hash(json{{"train", split.train}, {"valid", split.valid}, {"test", split.test}});
}

json epochs_json(const TrainReport& report) {
  json out = json::array();
  for (const auto& e : report.epochs) {
    json rec = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.valid) rec["valid"] = {{"acc", e.valid->accuracy}, {"f1", e.valid->weighted.f1}, {"avg_loss", e.valid->average_loss}};
    out.push_back(rec);
  }
  return out;
}

/// One training run: everything a report record and a summary need.
struct RunOutcome {
  json record;
  std::optional<MetricsReport> test;
  TrainReport train;
  double wall_seconds = 0.0;
  std::string checkpoint_bytes;
};

template <typename T>
RunOutcome train_once(const ExperimentSpec& spec, const LoadedData& data, const std::string& run_id) {
  const auto start = std::chrono::steady_clock::now();
  KlcblModel<T> model(spec.model, spec.train.seed);
  RunOutcome out;
  out.train = fit(data.train, data.valid, model, spec.train);
  out.test = evaluate(model, data.test);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const json spec_json = spec_to_json(spec);
  json rec = *out.test;
  rec["run_id"] = run_id;
  rec["status"] = "ok";
  rec["config_hash"] = json_hash(spec_json);
  rec["spec"] = spec_json;
  rec["seed"] = spec.train.seed;
  rec["fusion_dim"] = spec.model.fusion_dim();
  rec["param_count"] = model.param_count();
  rec["epochs"] = epochs_json(out.train);
  rec["split"] = {{"train", data.split.train.size()},
                 {"valid", data.split.valid.size()},
                 {"test", data.split.test.size()},
                 {"ids_hash", split_hash(data.split)}};
  out.record = std::move(rec);

  std::ostringstream ck(std::ios::binary);
  save_checkpoint(ck, model, data.source, spec.train.seed);
  out.checkpoint_bytes = ck.str();
  return out;
}

RunOutcome train_any(const ExperimentSpec& spec, const LoadedData& data, const std::string& run_id) {
  return spec.precision == Precision::kF64 ? train_once<double>(spec, data, run_id)
                                           : train_once<float>(spec, data, run_id);
}

/// Runs independent jobs on up to worker_threads() threads; results keep
/// job order.
template <typename R>
std::vector<R> run_jobs(const std::vector<std::function<R()>>& jobs) {
  std::vector<R> results(jobs.size());
  const std::size_t workers = std::min(worker_threads(), jobs.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = jobs[i]();
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) results[i] = jobs[i]();
    });
  }
  pool.clear();
  return results;
}

/// A job that never throws: failures become error records.
std::function<RunOutcome()> guarded_run(ExperimentSpec spec, const LoadedData& data, std::string run_id) {
  return [spec = std::move(spec), &data, run_id = std::move(run_id)]() {
    try {
      spec.validate();
      return train_any(spec, data, run_id);
    } catch (const std::exception& e) {
      RunOutcome failed;
      failed.record = error_record(run_id, e.what());
      return failed;
    }
  };
}

std::string epoch_lines(const TrainReport& report) {
  std::ostringstream os;
  for (const auto& e : report.epochs) {
    os << "  epoch " << e.epoch << "  train_loss " << format_metric(e.train_loss);
    if (e.valid) os << "  valid_acc " << format_metric(e.valid->accuracy) << "  valid_loss " << format_metric(e.valid->average_loss);
    os << "  (" << format_seconds(e.wall_seconds) << " s)\n";
  }
  return os.str();
}

}  // namespace

CommandResult cmd_train(const ExperimentSpec& spec) {
  CommandResult result;
  try {
    spec.validate();
    const LoadedData data = load_data(spec);
    ensure_dir(spec.out_dir);
    RunOutcome run = train_any(spec, data, spec.name);

    std::ofstream ck(spec.out_dir / "checkpoint.bin", std::ios::binary);
    if (!ck) throw Error("cannot write checkpoint under '" + spec.out_dir.string() + "'");
    ck << run.checkpoint_bytes;
    ck.close();
    result.records.push_back(run.record);
    write_text(spec.out_dir / "report.jsonl", jsonl(result.records));

    std::ostringstream os;
    os << "run " << spec.name << "  seed " << spec.train.seed << "  precision " << precision_name(spec.precision)
       << "\nsplit " << data.split.train.size() << "/" << data.split.valid.size() << "/" << data.split.test.size()
       << "  fusion dim " << spec.model.fusion_dim() << "  parameters " << run.record["param_count"].get<std::size_t>()
       << "\n"
       << epoch_lines(run.train) << "\ntest metrics\n"
       << format_metrics_table({{spec.name, *run.test}}) << "wall time " << format_seconds(run.wall_seconds) << " s\n";
    result.text = os.str();
    write_text(spec.out_dir / "summary.txt", result.text);
  } catch (const std::exception& e) {
    result.records.push_back(error_record(spec.name, e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

namespace {

template <typename T>
json eval_once(const ExperimentSpec& spec, const fs::path& checkpoint) {
  auto ck = load_checkpoint<T>(checkpoint);
  if (ck.embedding.dim != spec.model.embedding_dim) {
    throw ConfigError("checkpoint expects embedding dim " + std::to_string(ck.embedding.dim) + ", data has dim " +
                      std::to_string(spec.model.embedding_dim));
  }
  ExperimentSpec resolved = spec;
  resolved.model = ck.model.config();
  if (ck.embedding.kind == "hash") resolved.max_tokens = ck.embedding.max_tokens;
  const LoadedData data = load_data(resolved);
  json rec = evaluate(ck.model, data.test);
  rec["run_id"] = spec.name;
  rec["status"] = "ok";
  rec["checkpoint"] = checkpoint.generic_string();
  rec["spec"] = spec_to_json(resolved);
  rec["config_hash"] = json_hash(rec["spec"]);
  rec["seed"] = spec.train.seed;
  return rec;
}

}  // namespace

CommandResult cmd_eval(const ExperimentSpec& spec, const fs::path& checkpoint) {
  CommandResult result;
  try {
    const json rec = checkpoint_dtype(checkpoint) == "f64le" ? eval_once<double>(spec, checkpoint)
                                                             : eval_once<float>(spec, checkpoint);
    result.records.push_back(rec);
    ensure_dir(spec.out_dir);
    write_text(spec.out_dir / "report.jsonl", jsonl(result.records));
    MetricsReport m;
    m.accuracy = rec["acc"].get<double>();
    m.weighted = {rec["p"].get<double>(), rec["r"].get<double>(), rec["f1"].get<double>()};
    m.average_loss = rec["avg_loss"].get<double>();
    result.text = format_metrics_table({{spec.name, m}});
    write_text(spec.out_dir / "summary.txt", result.text);
  } catch (const std::exception& e) {
    result.records.push_back(error_record(spec.name, e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

namespace {

template <typename T>
std::vector<json> predict_all(const fs::path& checkpoint, const PredictInput& input) {
  const auto ck = load_checkpoint<T>(checkpoint);
  std::vector<EmbeddedExample> examples;
  if (!input.embeddings.empty()) {
    examples = read_embedding_file(input.embeddings);
    const std::size_t dim = examples.empty() ? ck.embedding.dim : examples.front().dim;
    if (dim != ck.embedding.dim) {
      throw ConfigError("embedding dim mismatch: checkpoint expects " + std::to_string(ck.embedding.dim) +
                        ", input '" + input.embeddings.string() + "' has " + std::to_string(dim));
    }
    if (ck.embedding.kind != "file") {
      throw ConfigError("checkpoint was trained on hash embeddings; give text input instead of an embedding file");
    }
  } else {
    if (ck.embedding.kind != "hash") {
      throw ConfigError("checkpoint was trained on embeddings from a file; give an embedding file as input");
    }
    for (const auto& raw : read_unlabeled(input.text)) {
      examples.push_back(embed_example(raw, ck.embedding.dim, ck.embedding.max_tokens));
    }
  }
  std::vector<json> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto p = predict(ex, ck.model);
    out.push_back({{"id", ex.id}, {"class", p.label}, {"probs", p.probs}});
  }
  return out;
}

}  // namespace

CommandResult cmd_predict(const fs::path& checkpoint, const PredictInput& input, const fs::path& out_dir) {
  CommandResult result;
  try {
    if (input.text.empty() == input.embeddings.empty()) {
      throw ConfigError("predict needs exactly one of a text input or an embedding file");
    }
    result.records = checkpoint_dtype(checkpoint) == "f64le" ? predict_all<double>(checkpoint, input)
                                                             : predict_all<float>(checkpoint, input);
    result.text = jsonl(result.records);
    ensure_dir(out_dir);
    write_text(out_dir / "predictions.jsonl", result.text);
  } catch (const std::exception& e) {
    result.records.push_back(error_record("predict", e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

std::vector<AblationVariant> ablation_variants(const ModelConfig& base) {
  std::vector<AblationVariant> out;
  ModelConfig full = base;
  full.use_cnn = true;
  full.use_bilstm = true;
  full = full.with_matching_head();

  out.push_back({"full", "LERT-CNN-BiLSTM", full});
  ModelConfig no_cnn = full;
  no_cnn.use_cnn = false;
  out.push_back({"no_cnn", "LERT-BiLSTM", no_cnn.with_matching_head()});
  ModelConfig no_bilstm = full;
  no_bilstm.use_bilstm = false;
  out.push_back({"no_bilstm", "LERT-CNN", no_bilstm.with_matching_head()});
  ModelConfig dense = full;
  dense.head.kind = HeadKind::kDense;
  out.push_back({"dense_head", "LERT-CNN-BiLSTM", dense});
  ModelConfig kan = full;
  kan.head.kind = HeadKind::kKan;
  out.push_back({"kan_head", "LERT-CNN-BiLSTM (+KAN)", kan});
  return out;
}

CommandResult cmd_ablate(const ExperimentSpec& spec) {
  CommandResult result;
  try {
    spec.validate();
    const LoadedData data = load_data(spec);
    ensure_dir(spec.out_dir);
    const auto variants = ablation_variants(spec.model);

    std::vector<std::function<RunOutcome()>> jobs;
    for (const auto& v : variants) {
      ExperimentSpec vspec = spec;
      vspec.model = v.model;
      jobs.push_back(guarded_run(std::move(vspec), data, spec.name + "/" + v.key));
    }
    const auto runs = run_jobs(jobs);

    std::ostringstream table;
    std::size_t label_width = 5;
    for (const auto& v : variants) label_width = std::max(label_width, v.label.size());
    auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    table << pad("Variant", 10) << "  " << pad("Model", label_width) << "  " << pad("Fusion", 6) << "  "
          << pad("Acc", 9) << "  " << pad("P", 9) << "  " << pad("R", 9) << "  " << pad("F1", 9) << "  Loss\n";
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto& v = variants[i];
      json rec = runs[i].record;
      rec["variant"] = v.key;
      rec["label"] = v.label;
      result.records.push_back(rec);
      table << pad(v.key, 10) << "  " << pad(v.label, label_width) << "  "
            << pad(std::to_string(v.model.fusion_dim()), 6) << "  ";
      if (runs[i].test) {
        const auto& m = *runs[i].test;
        table << format_metric(m.accuracy) << "  " << format_metric(m.weighted.precision) << "  "
              << format_metric(m.weighted.recall) << "  " << format_metric(m.weighted.f1) << "  "
              << format_metric(m.average_loss) << '\n';
      } else {
        table << "failed: " << rec.value("error", std::string()) << '\n';
      }
    }
    const auto& kan = runs[4].test;
    const auto& dense = runs[3].test;
    if (kan && dense) {
      const json delta = {{"run_id", spec.name + "/kan_minus_dense"},
                          {"status", "ok"},
                          {"acc", kan->accuracy - dense->accuracy},
                          {"p", kan->weighted.precision - dense->weighted.precision},
                          {"r", kan->weighted.recall - dense->weighted.recall},
                          {"f1", kan->weighted.f1 - dense->weighted.f1},
                          {"avg_loss", kan->average_loss - dense->average_loss}};
      result.records.push_back(delta);
      table << "\nKAN minus dense head: acc " << format_metric(delta["acc"].get<double>()) << "  f1 "
            << format_metric(delta["f1"].get<double>()) << '\n';
    }
    table << "split " << data.split.train.size() << "/" << data.split.valid.size() << "/" << data.split.test.size()
          << " (seed " << spec.train.seed << ", shared by all variants)\n";
    result.text = table.str();
    write_text(spec.out_dir / "report.jsonl", jsonl(result.records));
    write_text(spec.out_dir / "summary.txt", result.text);
  } catch (const std::exception& e) {
    result.records.push_back(error_record(spec.name, e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

std::vector<double> default_sweep_values(std::string_view axis) {
  if (axis == "lr") return {1e-5, 1e-6, 1e-7};
  if (axis == "batch") return {2, 4, 8, 16};
  throw ConfigError("sweep axis must be lr or batch, got '" + std::string(axis) + "'");
}

CommandResult cmd_sweep(const ExperimentSpec& spec, const std::string& axis, const std::vector<double>& values_in) {
  CommandResult result;
  try {
    const auto values = values_in.empty() ? default_sweep_values(axis) : values_in;
    if (axis != "lr" && axis != "batch") throw ConfigError("sweep axis must be lr or batch, got '" + axis + "'");
    if (values.size() < 2) {
      throw ConfigError("a sweep needs at least 2 values, got " + std::to_string(values.size()));
    }
    for (double v : values) {
      if (axis == "batch" && !(v >= 1.0 && v == std::floor(v))) {
        throw ConfigError("batch sweep values must be positive integers, got " + format_value(v));
      }
      if (axis == "lr" && !(v > 0.0)) throw ConfigError("learning rates must be positive, got " + format_value(v));
    }
    spec.validate();
    const LoadedData data = load_data(spec);
    ensure_dir(spec.out_dir);

    std::vector<std::function<RunOutcome()>> jobs;
    for (double v : values) {
      ExperimentSpec vspec = spec;
      vspec.sweep_axis = axis;
      vspec.sweep_values = values;
      if (axis == "lr") {
        vspec.train.learning_rate = v;
      } else {
        vspec.train.batch_size = static_cast<std::size_t>(v);
      }
      jobs.push_back(guarded_run(std::move(vspec), data, spec.name + "/" + axis + "=" + format_value(v)));
    }
    const auto runs = run_jobs(jobs);

    std::ostringstream tsv;
    tsv << "axis\tvalue\tepoch\ttrain_loss\tvalid_acc\tvalid_loss\n";
    std::vector<TableRow> rows;
    std::string failures;
    for (std::size_t i = 0; i < values.size(); ++i) {
      json rec = runs[i].record;
      rec["axis"] = axis;
      rec["value"] = values[i];
      result.records.push_back(rec);
      const std::string label = axis + "=" + format_value(values[i]);
      if (!runs[i].test) {
        failures += label + " failed: " + rec.value("error", std::string()) + "\n";
        continue;
      }
      rows.push_back({label, *runs[i].test});
      for (const auto& e : runs[i].train.epochs) {
        tsv << axis << '\t' << format_value(values[i]) << '\t' << e.epoch << '\t' << format_metric(e.train_loss) << '\t'
            << (e.valid ? format_metric(e.valid->accuracy) : "") << '\t'
            << (e.valid ? format_metric(e.valid->average_loss) : "") << '\n';
      }
    }
    result.text = format_metrics_table(rows) + failures;
    write_text(spec.out_dir / "sweep.tsv", tsv.str());
    write_text(spec.out_dir / "report.jsonl", jsonl(result.records));
    write_text(spec.out_dir / "summary.txt", result.text);
  } catch (const std::exception& e) {
    result.records.push_back(error_record(spec.name, e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

CommandResult cmd_export_report(const fs::path& report) {
  CommandResult result;
  const fs::path file = fs::is_directory(report) ? report / "report.jsonl" : report;
  try {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot read report '" + file.string() + "'");
    std::vector<TableRow> rows;
    std::string failures;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json rec = json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object()) {
        throw FormatError("report: malformed record", FormatError::Unit::kLine, line_no);
      }
      const std::string run_id = rec.value("run_id", std::string("?"));
      if (rec.value("status", std::string("ok")) == "error") {
        failures += run_id + " failed: " + rec.value("error", std::string()) + "\n";
        continue;
      }
      if (!rec.contains("acc") || !rec.contains("avg_loss")) continue;
      MetricsReport m;
      m.accuracy = rec["acc"].get<double>();
      m.weighted = {rec["p"].get<double>(), rec["r"].get<double>(), rec["f1"].get<double>()};
      m.average_loss = rec["avg_loss"].get<double>();
      rows.push_back({rec.contains("label") ? run_id + " " + rec["label"].get<std::string>() : run_id, m});
    }
    result.text = format_metrics_table(rows) + failures;
  } catch (const std::exception& e) {
    result.records.push_back(error_record("export-report", e.what()));
    result.text = std::string("error: ") + e.what() + "\n";
  }
  return result;
}

}  // namespace klcbl
