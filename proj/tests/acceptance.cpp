// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "klcbl/bilstm.hpp"
#include "klcbl/cnn.hpp"
#include "klcbl/experiment.hpp"
#include "klcbl/grad_check.hpp"
#include "klcbl/kan.hpp"
#include "klcbl/metrics.hpp"
#include "klcbl/model.hpp"
#include "klcbl/ops.hpp"
#include "scenarios.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace klcbl;
using klcbl::testing::random_example;
using klcbl::testing::random_tensor;
using TensorD = Tensor<double>;
using nlohmann::json;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_seconds > 0 && secs >= budget_seconds) {
    out.ok = false;
    out.detail += "; over the " + std::to_string(static_cast<int>(budget_seconds)) + " s budget";
  }
  if (!out.ok) ++failures;
  std::printf("%s  %-24s %8.2f s  %s\n", out.ok ? "PASS" : "FAIL", name.c_str(), secs, out.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- gradients

struct GradTally {
  std::string worst_name;
  double worst = 0.0;
  std::size_t checks = 0;
  std::size_t redraws = 0;
  bool incomplete = false;

  void add(const std::string& name, double err) {
    ++checks;
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  }
};

constexpr int kSeeds = 10;
constexpr int kMaxDraws = 50;

// Runs `draw` (which builds a fresh random instance and checks it) until it
// lands away from every kink, once per seed.
void per_seed(GradTally& tally, const std::string& name, const std::function<GradCheckResult(SplitMix64&)>& draw) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    SplitMix64 rng(1000 + static_cast<std::uint64_t>(seed));
    GradCheckResult r;
    int attempt = 0;
    do {
      r = draw(rng);
      if (r.at_kink()) ++tally.redraws;
    } while (r.at_kink() && ++attempt < kMaxDraws);
    if (r.at_kink()) {
      tally.incomplete = true;
      continue;
    }
    tally.add(name, r.max_relative_error);
  }
}

Outcome gradient_suite() {
  GradTally t;

  per_seed(t, "conv", [](SplitMix64& rng) {
    ConvConfig cfg;
    cfg.in_dim = 4;
    cfg.out_channels = 3;
    cfg.kernel_size = 3;
    cfg.padding = 1;
    auto w = ConvWeights<double>::init(cfg, rng);
    for (auto& b : w.bias->mutable_data()) b = rng.uniform(-0.5, 0.5);
    auto x = random_tensor({5, 4}, rng);
    const auto probe = random_tensor({5, 3}, rng);
    return check_gradients_all<double>([&] { return sum(mul(conv1d_forward(x, cfg, w), probe)); },
                                       {x, w.weight, *w.bias});
  });
  per_seed(t, "pool", [](SplitMix64& rng) {
    auto x = random_tensor({6, 4}, rng);
    const auto probe = random_tensor({4}, rng);
    return check_gradients<double>([&](const TensorD& v) { return sum(mul(global_max_pool(v), probe)); }, x);
  });
  per_seed(t, "lstm_cell", [](SplitMix64& rng) {
    const auto w = LstmWeights<double>::init(3, 4, rng);
    auto x = random_tensor({3}, rng);
    auto h = random_tensor({4}, rng);
    auto c = random_tensor({4}, rng);
    const auto ph = random_tensor({4}, rng), pc = random_tensor({4}, rng);
    return check_gradients_all<double>(
        [&] {
          const auto s = lstm_cell_step(x, {h, c}, w);
          return add(sum(mul(s.h, ph)), sum(mul(s.c, pc)));
        },
        {x, h, c, w.input, w.recurrent, w.bias});
  });
  for (std::size_t steps = 1; steps <= 8; ++steps) {
    per_seed(t, "bilstm_T" + std::to_string(steps), [steps](SplitMix64& rng) {
      LstmConfig cfg;
      cfg.in_dim = 3;
      cfg.hidden_per_direction = 2;
      BiLstmChannel<double> ch(cfg, rng);
      auto x = random_tensor({steps, 3}, rng);
      const auto probe = random_tensor({4}, rng);
      auto& f = ch.forward_weights();
      auto& b = ch.backward_weights();
      return check_gradients_all<double>([&] { return sum(mul(ch.forward(x), probe)); },
                                         {x, f.input, f.recurrent, f.bias, b.input, b.recurrent, b.bias});
    });
  }
  per_seed(t, "silu", [](SplitMix64& rng) {
    auto x = random_tensor({8}, rng, -6, 6);
    const auto probe = random_tensor({8}, rng);
    return check_gradients<double>([&](const TensorD& v) { return sum(mul(silu(v), probe)); }, x);
  });
  per_seed(t, "kan_edge", [](SplitMix64& rng) {
    KanLayer<double> edge(1, 1, SplineGrid{}, rng);
    auto x = random_tensor({1}, rng, -2.5, 2.5);
    return check_gradients_all<double>([&] { return sum(kan_layer_forward(x, edge)); },
                                       {x, edge.omega(), edge.coeffs()});
  });
  per_seed(t, "kan_layer", [](SplitMix64& rng) {
    KanLayer<double> layer(3, 2, SplineGrid{}, rng);
    auto x = random_tensor({4, 3}, rng, -2.5, 2.5);
    const auto probe = random_tensor({4, 2}, rng);
    return check_gradients_all<double>([&] { return sum(mul(kan_layer_forward(x, layer), probe)); },
                                       {x, layer.omega(), layer.coeffs()});
  });
  per_seed(t, "kan_head", [](SplitMix64& rng) {
    HeadConfig cfg;
    cfg.in_dim = 4;
    cfg.hidden_dim = 3;
    ClassifierHead<double> head(cfg, rng);
    auto x = random_tensor({4}, rng, -2, 2);
    const auto probe = random_tensor({3}, rng);
    auto& k = *head.kan();
    return check_gradients_all<double>([&] { return sum(mul(head.forward(x), probe)); },
                                       {x, k.hidden.omega(), k.hidden.coeffs(), k.output.omega(), k.output.coeffs()});
  });
  per_seed(t, "dense_head", [](SplitMix64& rng) {
    HeadConfig cfg;
    cfg.kind = HeadKind::kDense;
    cfg.in_dim = 5;
    ClassifierHead<double> head(cfg, rng);
    auto x = random_tensor({2, 5}, rng);
    const std::vector<int> labels{0, 2};
    return check_gradients_all<double>([&] { return cross_entropy(head.forward(x), labels); },
                                       {x, head.dense()->weight, head.dense()->bias});
  });
  int model_seed = 0;
  per_seed(t, "klcbl_miniature", [&model_seed](SplitMix64& rng) {
    KlcblModel<double> model(ModelConfig::miniature(8, 4, 4, 8), static_cast<std::uint64_t>(model_seed++));
    const std::vector<EmbeddedExample> batch{random_example(3, 8, rng, 1), random_example(3, 8, rng, 2)};
    std::vector<const EmbeddedExample*> ptrs{&batch[0], &batch[1]};
    const std::vector<int> labels{1, 2};
    std::vector<TensorD> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    return check_gradients_all<double>([&] { return cross_entropy(model.forward_batch(ptrs), labels); }, params);
  });

  const bool ok = !t.incomplete && t.worst < 1e-5;
  return {ok, std::to_string(t.checks) + " checks, worst " + fmt("%.2e", t.worst) + " (" + t.worst_name + "), " +
                  std::to_string(t.redraws) + " kink redraws" + (t.incomplete ? ", some seeds never left a kink" : "")};
}

// ---------------------------------------------------------------- shapes

Outcome shape_fidelity() {
  SplitMix64 rng(1);
  const auto ex = random_example(5, 768, rng);
  KlcblModel<float> full(ModelConfig{}, 24);
  const std::size_t fused = full.fuse(ex).size();
  const std::size_t logits = full.forward(ex).size();
  bool ok = fused == 1024 && logits == 3 && ModelConfig{}.fusion_dim() == 768 + 128 + 128;
  std::string detail = "fused " + std::to_string(fused) + ", logits " + std::to_string(logits);
  for (const auto& v : ablation_variants(ModelConfig{})) {
    if (v.model.use_cnn && v.model.use_bilstm) continue;
    const std::size_t removed = v.model.use_cnn ? v.model.lstm.output_dim() : v.model.cnn.out_channels;
    KlcblModel<float> m(v.model, 24);
    const std::size_t width = m.fuse(ex).size();
    ok = ok && width == 1024 - removed && m.forward(ex).size() == 3;
    detail += ", " + v.key + " " + std::to_string(width);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- B-splines

double oracle_basis(std::size_t i, std::size_t p, double x, const SplineGrid& g) {
  auto t = [&](std::size_t j) { return g.grid_min + (static_cast<double>(j) - static_cast<double>(g.order)) * g.spacing(); };
  if (p == 0) return (t(i) <= x && x < t(i + 1)) ? 1.0 : 0.0;
  return (x - t(i)) / (t(i + p) - t(i)) * oracle_basis(i, p - 1, x, g) +
         (t(i + p + 1) - x) / (t(i + p + 1) - t(i + 1)) * oracle_basis(i + 1, p - 1, x, g);
}

Outcome bspline_suite() {
  const SplineGrid g;
  SplitMix64 rng(2);
  double unity = 0.0;
  std::size_t support_violations = 0;
  for (int n = 0; n < 10000; ++n) {
    const double x = rng.uniform(g.grid_min, g.grid_max);
    const auto b = bspline_basis(x, g);
    unity = std::max(unity, std::abs(std::accumulate(b.begin(), b.end(), 0.0) - 1.0));
    for (std::size_t i = 0; i < b.size(); ++i) {
      const bool inside = g.knot(i) <= x && x < g.knot(i + g.order + 1);
      if (!inside && b[i] != 0.0) ++support_violations;
    }
  }
  double oracle = 0.0;
  for (int n = 0; n < 100; ++n) {
    const double x = rng.uniform(g.knot(0), g.knot(g.knot_count() - 1));
    const auto b = bspline_basis(x, g);
    for (std::size_t i = 0; i < b.size(); ++i) oracle = std::max(oracle, std::abs(b[i] - oracle_basis(i, g.order, x, g)));
  }
  const bool ok = unity <= 1e-9 && support_violations == 0 && oracle <= 1e-12;
  return {ok, "unity dev " + fmt("%.1e", unity) + ", support violations " + std::to_string(support_violations) +
                  ", oracle dev " + fmt("%.1e", oracle)};
}

// ---------------------------------------------------------------- KAN fit

Outcome kan_expressivity() {
  SplineGrid g;
  g.intervals = 10;
  g.order = 3;
  const auto fit = klcbl::testing::fit_sine(g, 2000, 1e-2, 0.05);
  return {fit.rmse < 0.05, "rmse " + fmt("%.4f", fit.rmse) + " after " + std::to_string(fit.steps) + " Adam steps"};
}

// ---------------------------------------------------------------- overfit

Outcome overfit() {
  const auto r = klcbl::testing::overfit_miniature(96, 200, 1e-3, 24);
  return {r.train_accuracy == 1.0 && r.epochs <= 200,
          "train acc " + fmt("%.4f", r.train_accuracy) + " at epoch " + std::to_string(r.epochs) + ", loss " +
              fmt("%.4f", r.train_loss)};
}

// ---------------------------------------------------------------- metrics

Outcome metrics_oracle() {
  SplitMix64 rng(3);
  std::size_t mismatches = 0, recall_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts)
      for (auto& v : row) v = rng.below(100);
    if (cm.total() == 0) cm.counts[0][0] = 1;
    const auto& a = cm.counts;
    for (int c = 0; c < kNumClasses; ++c) {
      const double tp = static_cast<double>(a[c][c]);
      const double col = static_cast<double>(a[0][c] + a[1][c] + a[2][c]);
      const double row = static_cast<double>(a[c][0] + a[c][1] + a[c][2]);
      const double p = col > 0 ? tp / col : 0.0;
      const double r = row > 0 ? tp / row : 0.0;
      const double f1 = p + r > 0 ? 2.0 * (p * r) / (p + r) : 0.0;
      const auto m = per_class_prf(cm, c);
      if (m.precision != p || m.recall != r || m.f1 != f1) ++mismatches;
    }
    if (weighted_prf(cm).recall != accuracy(cm)) ++recall_mismatches;
  }
  auto cfg = ModelConfig::miniature(8, 4, 4, 8);
  cfg.head.kind = HeadKind::kDense;
  KlcblModel<double> model(cfg, 1);
  for (auto& w : model.head().dense()->weight.mutable_data()) w = 0.0;
  std::vector<EmbeddedExample> data;
  for (int i = 0; i < 30; ++i) data.push_back(random_example(3, 8, rng, i % 3));
  const double loss_dev = std::abs(average_loss(model, data) - std::log(3.0));
  const bool ok = mismatches == 0 && recall_mismatches == 0 && loss_dev <= 1e-7;
  return {ok, "P/R/F1 mismatches " + std::to_string(mismatches) + ", recall!=acc " + std::to_string(recall_mismatches) +
                  ", |loss - ln 3| " + fmt("%.1e", loss_dev)};
}

// ---------------------------------------------------------------- determinism

ExperimentSpec small_spec(const fs::path& out) {
  ExperimentSpec spec;
  spec.name = "acceptance";
  spec.synthetic = 60;
  spec.model = ModelConfig::miniature(32, 16, 16, 32);
  spec.train.epochs = 2;
  spec.train.learning_rate = 1e-3;
  spec.train.seed = 24;
  spec.out_dir = out;
  return spec;
}

Outcome determinism(const fs::path& scratch) {
  const auto a = small_spec(scratch / "det_a"), b = small_spec(scratch / "det_b");
  const auto ra = cmd_train(a), rb = cmd_train(b);
  if (!ra.ok() || !rb.ok()) return {false, "training failed: " + ra.text + rb.text};
  const bool reports = slurp(a.out_dir / "report.jsonl") == slurp(b.out_dir / "report.jsonl");
  const bool checkpoints = slurp(a.out_dir / "checkpoint.bin") == slurp(b.out_dir / "checkpoint.bin");

  std::vector<RawExample> examples(10000);
  for (std::size_t i = 0; i < examples.size(); ++i) examples[i] = {"x" + std::to_string(i), "text", static_cast<int>(i % 3)};
  const auto s1 = split_dataset(examples, 24), s2 = split_dataset(examples, 24);
  const bool sizes = s1.train.size() == 8000 && s1.valid.size() == 1000 && s1.test.size() == 1000;
  const bool ok = reports && checkpoints && sizes && s1 == s2;
  return {ok, std::string("reports ") + (reports ? "identical" : "differ") + ", checkpoints " +
                  (checkpoints ? "identical" : "differ") + ", split " + std::to_string(s1.train.size()) + "/" +
                  std::to_string(s1.valid.size()) + "/" + std::to_string(s1.test.size()) +
                  (s1 == s2 ? " repeatable" : " NOT repeatable")};
}

// ---------------------------------------------------------------- ablation

Outcome ablation(const fs::path& scratch) {
  auto spec = small_spec(scratch / "ablate");
  spec.train.epochs = 1;
  const auto result = cmd_ablate(spec);
  if (!result.ok()) return {false, result.text};
  bool ok = result.records.size() == 6;
  std::set<std::string> splits;
  std::vector<std::string> labels;
  for (std::size_t i = 0; ok && i < 5; ++i) {
    splits.insert(result.records[i]["split"].dump());
    labels.push_back(result.records[i]["label"].get<std::string>());
  }
  const std::vector<std::string> want{"LERT-CNN-BiLSTM", "LERT-BiLSTM", "LERT-CNN", "LERT-CNN-BiLSTM",
                                      "LERT-CNN-BiLSTM (+KAN)"};
  ok = ok && labels == want && splits.size() == 1;
  const bool delta = ok && result.records[5]["run_id"].get<std::string>().ends_with("kan_minus_dense") &&
                     result.records[5].contains("acc");
  ok = ok && delta && result.text.find("shared by all variants") != std::string::npos;
  return {ok, std::to_string(labels.size()) + " variants, " + std::to_string(splits.size()) + " distinct split(s)" +
                  (delta ? ", KAN-dense acc delta " + fmt("%+.7f", result.records[5]["acc"].get<double>()) : "")};
}

// ---------------------------------------------------------------- interchange

Outcome interchange() {
  SplitMix64 rng(4);
  std::vector<EmbeddedExample> data;
  for (int i = 0; i < 100; ++i) {
    auto ex = random_example(1 + rng.below(20), 48, rng, static_cast<int>(rng.below(3)), "ex" + std::to_string(i));
    ex.tokens[0] = -0.0f;
    ex.pooled[0] = 1e-40f;  // subnormal
    data.push_back(std::move(ex));
  }
  std::stringstream buf;
  write_embeddings(buf, data);
  const std::string bytes = buf.str();
  std::istringstream in(bytes);
  const auto back = read_embeddings(in);
  bool exact = back.size() == data.size();
  for (std::size_t i = 0; exact && i < data.size(); ++i) {
    exact = back[i].id == data[i].id && back[i].label == data[i].label && back[i].steps == data[i].steps &&
            back[i].dim == data[i].dim &&
            std::memcmp(back[i].tokens.data(), data[i].tokens.data(), data[i].tokens.size() * sizeof(float)) == 0 &&
            std::memcmp(back[i].pooled.data(), data[i].pooled.data(), data[i].pooled.size() * sizeof(float)) == 0;
  }

  std::size_t positioned = 0, cases = 0;
  auto expect_positioned = [&](const std::string& input, std::size_t max_pos) {
    ++cases;
    std::istringstream s(input);
    try {
      read_embeddings(s);
    } catch (const FormatError& e) {
      if (e.position() <= max_pos) ++positioned;
    } catch (...) {
    }
  };
  for (const std::string header : {"not json", "{\"format_version\":2,\"dim\":4,\"count\":0,\"dtype\":\"f32le\"}",
                                   "{\"format_version\":1,\"dim\":4,\"count\":0,\"dtype\":\"f16\"}",
                                   "{\"format_version\":1,\"count\":0,\"dtype\":\"f32le\"}"}) {
    expect_positioned(header + "\n", 0);
  }
  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 4, bytes.size() / 2, bytes.find('\n') + 3}) {
    expect_positioned(bytes.substr(0, cut), cut);
  }
  const bool ok = exact && positioned == cases;
  return {ok, std::string(exact ? "100 examples bit-exact" : "round trip NOT exact") + ", " +
                  std::to_string(positioned) + "/" + std::to_string(cases) + " malformed inputs rejected with positions"};
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / "klcbl_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  criterion("gradient suite", 60, gradient_suite);
  criterion("shape fidelity", 0, shape_fidelity);
  criterion("b-spline suite", 0, bspline_suite);
  criterion("kan expressivity", 30, kan_expressivity);
  criterion("overfit check", 120, overfit);
  criterion("metrics oracle", 0, metrics_oracle);
  criterion("determinism", 0, [&] { return determinism(scratch); });
  criterion("ablation protocol", 0, [&] { return ablation(scratch); });
  criterion("interchange round-trip", 0, interchange);

  fs::remove_all(scratch);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
