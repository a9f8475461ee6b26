// klcbl: train, evaluate and compare incident-report classifiers.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "klcbl/experiment.hpp"
#include "klcbl/synthetic.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string embeddings;
  bool hash_embed = false;
  std::string precision;
  std::string data;
  std::optional<std::size_t> synthetic;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment spec (JSON) or a report.jsonl to re-run");
  cmd->add_option("--seed", f.seed, "seed for split, initialisation and shuffling");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--embeddings", f.embeddings, "embedding interchange file");
  cmd->add_flag("--hash-embed", f.hash_embed, "embed the dataset with the deterministic hash embedder");
  cmd->add_option("--precision", f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--data", f.data, "dataset file: id<TAB>label<TAB>text per line");
  cmd->add_option("--synthetic", f.synthetic, "generate a synthetic dataset of this size");
}

klcbl::ExperimentSpec resolve(const CommonFlags& f) {
  klcbl::ExperimentSpec spec = f.config.empty() ? klcbl::ExperimentSpec{} : klcbl::load_spec(f.config);
  if (f.seed) spec.train.seed = *f.seed;
  if (!f.out_dir.empty()) spec.out_dir = f.out_dir;
  if (!f.data.empty()) {
    spec.data = f.data;
    spec.synthetic = 0;
  }
  if (f.synthetic) {
    spec.synthetic = *f.synthetic;
    spec.data.clear();
  }
  if (!f.embeddings.empty()) {
    spec.embedding_source = "file";
    spec.embeddings = f.embeddings;
  }
  if (f.hash_embed) spec.embedding_source = "hash";
  if (!f.precision.empty()) spec.precision = klcbl::parse_precision(f.precision);
  return spec;
}

int finish(const klcbl::CommandResult& result) {
  std::cout << result.text;
  for (const auto& r : result.records) {
    if (r.value("status", std::string("ok")) == "error") std::cerr << r.dump() << '\n';
  }
  return result.ok() ? 0 : 1;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= csv.size() && !csv.empty()) {
    const auto comma = csv.find(',', pos);
    const std::string item = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw klcbl::ConfigError("not a number in --values: '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KLCBL incident-report classifier: training, evaluation, ablations and sweeps"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f, sweep_f;
  auto* train = app.add_subcommand("train", "train one model and write checkpoint, report and summary");
  add_common(train, train_f);

  auto* eval = app.add_subcommand("eval", "test-split metrics of a saved checkpoint");
  add_common(eval, eval_f);
  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint.bin from train")->required();

  auto* predict = app.add_subcommand("predict", "classify each input line with a saved checkpoint");
  std::string predict_checkpoint, predict_input, predict_embeddings, predict_out = "out";
  predict->add_option("--checkpoint", predict_checkpoint, "checkpoint.bin from train")->required();
  predict->add_option("--input", predict_input, "lines of id<TAB>text");
  predict->add_option("--embeddings", predict_embeddings, "embedding interchange file");
  predict->add_option("--out-dir", predict_out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "train the five architecture variants on one split");
  add_common(ablate, ablate_f);

  auto* sweep = app.add_subcommand("sweep", "one training run per learning rate or batch size");
  add_common(sweep, sweep_f);
  std::string axis;
  std::string values;
  sweep->add_option("--axis", axis, "lr or batch")->check(CLI::IsMember({"lr", "batch"}));
  sweep->add_option("--values", values, "comma-separated values (default grid when omitted)");

  auto* export_report = app.add_subcommand("export-report", "metrics table of a report.jsonl");
  std::string report_path;
  export_report->add_option("report", report_path, "report.jsonl or a directory holding one")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic labelled dataset");
  std::size_t synth_n = 300;
  std::uint64_t synth_seed = 24;
  std::string synth_out;
  synth->add_option("--count", synth_n, "number of examples");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--output", synth_out, "dataset file to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return finish(klcbl::cmd_train(resolve(train_f)));
    if (*eval) return finish(klcbl::cmd_eval(resolve(eval_f), eval_checkpoint));
    if (*predict) return finish(klcbl::cmd_predict(predict_checkpoint, {predict_input, predict_embeddings}, predict_out));
    if (*ablate) return finish(klcbl::cmd_ablate(resolve(ablate_f)));
    if (*sweep) {
      auto spec = resolve(sweep_f);
      const std::string a = axis.empty() ? spec.sweep_axis : axis;
      const auto v = values.empty() ? (axis.empty() ? spec.sweep_values : std::vector<double>{}) : parse_values(values);
      return finish(klcbl::cmd_sweep(spec, a, v));
    }
    if (*export_report) return finish(klcbl::cmd_export_report(report_path));
    if (*synth) {
      const std::filesystem::path out(synth_out);
      if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
      klcbl::write_dataset(synth_out, klcbl::make_synthetic_dataset(synth_n, synth_seed));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"status", "error"}, {"error", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
