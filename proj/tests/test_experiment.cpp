#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "klcbl/experiment.hpp"
#include "klcbl/serialize.hpp"
#include "support.hpp"

namespace klcbl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("klcbl_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentSpec tiny(const std::string& out) const {
    ExperimentSpec spec;
    spec.name = "tiny";
    spec.synthetic = 30;
    spec.model = ModelConfig::miniature(16, 4, 4, 8);
    spec.train.epochs = 2;
    spec.train.learning_rate = 1e-3;
    spec.precision = Precision::kF64;
    spec.out_dir = root_ / out;
    return spec;
  }

  fs::path root_;
};

TEST_F(ExperimentTest, TrainWritesArtifactsAndRecord) {
  const auto spec = tiny("run");
  const auto result = cmd_train(spec);
  ASSERT_TRUE(result.ok()) << result.text;
  EXPECT_TRUE(fs::exists(spec.out_dir / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(spec.out_dir / "summary.txt"));
  const auto lines = lines_of(slurp(spec.out_dir / "report.jsonl"));
  ASSERT_EQ(lines.size(), 1u);
  const auto rec = json::parse(lines[0]);
  for (const char* key : {"acc", "p", "r", "f1", "avg_loss", "per_class", "confusion", "run_id", "status",
                          "config_hash", "spec", "seed", "fusion_dim", "param_count", "epochs", "split"}) {
    EXPECT_TRUE(rec.contains(key)) << key;
  }
  EXPECT_EQ(rec["split"]["train"], 24);
  EXPECT_EQ(rec["split"]["valid"], 3);
  EXPECT_EQ(rec["split"]["test"], 3);
  EXPECT_EQ(rec["fusion_dim"], 24);
  EXPECT_EQ(rec["epochs"].size(), 2u);
  EXPECT_EQ(rec["r"], rec["acc"]);
  EXPECT_FALSE(rec["spec"].contains("out_dir"));
  EXPECT_NE(result.text.find("test metrics"), std::string::npos);
  const auto ck = load_checkpoint<double>(spec.out_dir / "checkpoint.bin");
  EXPECT_EQ(ck.model.config(), spec.model);
  EXPECT_EQ(ck.embedding, (EmbeddingSource{"hash", 16, kDefaultMaxTokens}));
}

TEST_F(ExperimentTest, TrainIsByteIdenticalAcrossRunsAndDirectories) {
  auto a = tiny("a"), b = tiny("b");
  a.train.seed = b.train.seed = 24;
  ASSERT_TRUE(cmd_train(a).ok());
  ASSERT_TRUE(cmd_train(b).ok());
  EXPECT_EQ(slurp(a.out_dir / "report.jsonl"), slurp(b.out_dir / "report.jsonl"));
  EXPECT_EQ(slurp(a.out_dir / "checkpoint.bin"), slurp(b.out_dir / "checkpoint.bin"));

  // The report carries enough to rerun.
  auto again = load_spec(a.out_dir / "report.jsonl");
  again.out_dir = root_ / "c";
  ASSERT_TRUE(cmd_train(again).ok());
  EXPECT_EQ(slurp(a.out_dir / "report.jsonl"), slurp(again.out_dir / "report.jsonl"));
}

TEST_F(ExperimentTest, DifferentSeedsGiveDifferentCheckpoints) {
  auto a = tiny("a"), b = tiny("b");
  b.train.seed = 25;
  ASSERT_TRUE(cmd_train(a).ok());
  ASSERT_TRUE(cmd_train(b).ok());
  EXPECT_NE(slurp(a.out_dir / "checkpoint.bin"), slurp(b.out_dir / "checkpoint.bin"));
}

TEST_F(ExperimentTest, HeadWidthMismatchIsAnErrorRecord) {
  auto spec = tiny("bad");
  spec.model.use_cnn = false;  // head.in_dim still 24, fusion is now 20
  const auto result = cmd_train(spec);
  EXPECT_FALSE(result.ok());
  ASSERT_EQ(result.records.size(), 1u);
  const auto msg = result.records[0]["error"].get<std::string>();
  EXPECT_NE(msg.find("24"), std::string::npos);
  EXPECT_NE(msg.find("20"), std::string::npos);
  EXPECT_FALSE(fs::exists(spec.out_dir / "checkpoint.bin"));
}

TEST_F(ExperimentTest, SpecJsonRoundTripAndUnknownKeys) {
  auto spec = tiny("x");
  spec.sweep_axis = "batch";
  spec.sweep_values = {2, 4};
  const auto j = spec_to_json(spec);
  const auto back = spec_from_json(j);
  EXPECT_EQ(spec_to_json(back), j);
  EXPECT_EQ(back.model, spec.model);
  EXPECT_EQ(back.train, spec.train);
  auto bad = j;
  bad["lerning_rate"] = 1;
  EXPECT_THROW(spec_from_json(bad), ConfigError);
  bad = j;
  bad["train"]["momentum"] = 0.9;
  EXPECT_THROW(spec_from_json(bad), ConfigError);
  bad = j;
  bad["precision"] = "f16";
  EXPECT_THROW(spec_from_json(bad), ConfigError);

  std::ofstream(root_ / "spec.json") << j.dump(2);
  EXPECT_EQ(spec_to_json(load_spec(root_ / "spec.json")), j);
}

TEST_F(ExperimentTest, DataNeedsTenExamplesAndMatchingWidth) {
  auto spec = tiny("x");
  spec.synthetic = 9;
  EXPECT_THROW(load_data(spec), ConfigError);
  spec.synthetic = 10;
  const auto data = load_data(spec);
  EXPECT_EQ(data.train.size() + data.valid.size() + data.test.size(), 10u);
  EXPECT_EQ(data.split.train.size(), 8u);

  SplitMix64 rng(1);
  std::vector<EmbeddedExample> file_data;
  for (int i = 0; i < 12; ++i) file_data.push_back(testing::random_example(3, 12, rng, i % 3, "f" + std::to_string(i)));
  write_embedding_file(root_ / "emb.bin", file_data);
  spec.embedding_source = "file";
  spec.embeddings = root_ / "emb.bin";
  EXPECT_THROW(load_data(spec), Error);
  spec.model = ModelConfig::miniature(12, 4, 4, 8);
  const auto loaded = load_data(spec);
  EXPECT_EQ(loaded.source.kind, "file");
  EXPECT_EQ(loaded.train.size(), 9u);
}

TEST_F(ExperimentTest, EvalAndPredictUseTheCheckpoint) {
  const auto spec = tiny("run");
  ASSERT_TRUE(cmd_train(spec).ok());
  const auto ck = spec.out_dir / "checkpoint.bin";

  const auto ev = cmd_eval(spec, ck);
  ASSERT_TRUE(ev.ok()) << ev.text;
  const auto trained = json::parse(lines_of(slurp(spec.out_dir / "report.jsonl"))[0]);
  EXPECT_EQ(ev.records[0]["acc"], trained["acc"]);
  EXPECT_EQ(ev.records[0]["avg_loss"], trained["avg_loss"]);

  std::ofstream(root_ / "input.tsv") << "q1\tthe signal tower lost coverage\nq2\tfresh bread at the bakery\nq3\t\n";
  const auto pred = cmd_predict(ck, PredictInput{root_ / "input.tsv", {}}, root_ / "pred");
  ASSERT_TRUE(pred.ok()) << pred.text;
  const auto lines = lines_of(slurp(root_ / "pred" / "predictions.jsonl"));
  ASSERT_EQ(lines.size(), 3u);
  const char* ids[] = {"q1", "q2", "q3"};
  for (int i = 0; i < 3; ++i) {
    const auto rec = json::parse(lines[static_cast<std::size_t>(i)]);
    EXPECT_EQ(rec["id"], ids[i]);
    const auto probs = rec["probs"].get<std::vector<double>>();
    ASSERT_EQ(probs.size(), 3u);
    EXPECT_NEAR(probs[0] + probs[1] + probs[2], 1.0, 1e-12);
    const int cls = rec["class"].get<int>();
    EXPECT_GE(probs[static_cast<std::size_t>(cls)], *std::max_element(probs.begin(), probs.end()));
  }
}

TEST_F(ExperimentTest, MismatchedEmbeddingsAreRefused) {
  const auto spec = tiny("run");
  ASSERT_TRUE(cmd_train(spec).ok());
  const auto ck = spec.out_dir / "checkpoint.bin";

  SplitMix64 rng(2);
  std::vector<EmbeddedExample> wide{testing::random_example(2, 20, rng, 0, "w")};
  write_embedding_file(root_ / "wide.bin", wide);
  const auto pred = cmd_predict(ck, PredictInput{{}, root_ / "wide.bin"}, root_ / "pred");
  EXPECT_FALSE(pred.ok());
  const auto msg = pred.records.back()["error"].get<std::string>();
  EXPECT_NE(msg.find("16"), std::string::npos) << msg;
  EXPECT_NE(msg.find("20"), std::string::npos) << msg;

  auto other = spec;
  other.model = ModelConfig::miniature(20, 4, 4, 8);
  EXPECT_FALSE(cmd_eval(other, ck).ok());
  EXPECT_FALSE(cmd_eval(spec, root_ / "missing.bin").ok());
}

TEST_F(ExperimentTest, AblationTableHasFiveVariantsOnOneSplit) {
  auto spec = tiny("ablate");
  spec.train.epochs = 1;
  const auto result = cmd_ablate(spec);
  ASSERT_TRUE(result.ok()) << result.text;
  ASSERT_EQ(result.records.size(), 6u);
  const std::vector<std::string> keys{"full", "no_cnn", "no_bilstm", "dense_head", "kan_head"};
  const std::vector<std::string> labels{"LERT-CNN-BiLSTM", "LERT-BiLSTM", "LERT-CNN", "LERT-CNN-BiLSTM",
                                        "LERT-CNN-BiLSTM (+KAN)"};
  const std::vector<int> widths{24, 20, 20, 24, 24};
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& rec = result.records[i];
    EXPECT_EQ(rec["variant"], keys[i]);
    EXPECT_EQ(rec["label"], labels[i]);
    EXPECT_EQ(rec["fusion_dim"], widths[i]);
    EXPECT_EQ(rec["split"], result.records[0]["split"]);
    EXPECT_NE(result.text.find(labels[i]), std::string::npos);
  }
  EXPECT_EQ(result.records[3]["spec"]["model"]["head"]["kind"], "dense");
  EXPECT_EQ(result.records[4]["spec"]["model"]["head"]["kind"], "kan");
  const auto& delta = result.records[5];
  EXPECT_EQ(delta["run_id"], "tiny/kan_minus_dense");
  EXPECT_EQ(delta["acc"].get<double>(),
            result.records[4]["acc"].get<double>() - result.records[3]["acc"].get<double>());
  EXPECT_NE(result.text.find("shared by all variants"), std::string::npos);
  EXPECT_EQ(lines_of(slurp(spec.out_dir / "report.jsonl")).size(), 6u);
}

TEST_F(ExperimentTest, AblationVariantsDifferOnlyInTheAblatedField) {
  const auto base = ModelConfig{};
  const auto v = ablation_variants(base);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v[0].model, base);
  EXPECT_FALSE(v[1].model.use_cnn);
  EXPECT_EQ(v[1].model.head.in_dim, 896u);
  EXPECT_FALSE(v[2].model.use_bilstm);
  EXPECT_EQ(v[3].model.head.kind, HeadKind::kDense);
  EXPECT_EQ(v[4].model.head.kind, HeadKind::kKan);
  auto dense = v[3].model;
  dense.head.kind = HeadKind::kKan;
  EXPECT_EQ(dense, base);
}

TEST_F(ExperimentTest, SweepOverBatchSizes) {
  auto spec = tiny("sweep");
  spec.train.epochs = 1;
  const auto result = cmd_sweep(spec, "batch", {4, 8});
  ASSERT_TRUE(result.ok()) << result.text;
  ASSERT_EQ(result.records.size(), 2u);
  EXPECT_EQ(result.records[0]["spec"]["train"]["batch_size"], 4);
  EXPECT_EQ(result.records[1]["spec"]["train"]["batch_size"], 8);
  const auto tsv = lines_of(slurp(spec.out_dir / "sweep.tsv"));
  ASSERT_EQ(tsv.size(), 3u);
  EXPECT_EQ(tsv[0], "axis\tvalue\tepoch\ttrain_loss\tvalid_acc\tvalid_loss");
  EXPECT_EQ(tsv[1].rfind("batch\t4\t1\t", 0), 0u);
  EXPECT_EQ(tsv[2].rfind("batch\t8\t1\t", 0), 0u);
}

TEST_F(ExperimentTest, SweepRejectsDegenerateGrids) {
  auto spec = tiny("sweep");
  EXPECT_FALSE(cmd_sweep(spec, "lr", {1e-3}).ok());
  EXPECT_FALSE(cmd_sweep(spec, "batch", {2, 2.5}).ok());
  EXPECT_FALSE(cmd_sweep(spec, "momentum", {0.1, 0.2}).ok());
  EXPECT_EQ(default_sweep_values("lr"), (std::vector<double>{1e-5, 1e-6, 1e-7}));
  EXPECT_EQ(default_sweep_values("batch"), (std::vector<double>{2, 4, 8, 16}));
}

TEST_F(ExperimentTest, ExportReportBuildsATable) {
  const auto spec = tiny("run");
  ASSERT_TRUE(cmd_train(spec).ok());
  const auto from_dir = cmd_export_report(spec.out_dir);
  ASSERT_TRUE(from_dir.ok()) << from_dir.text;
  EXPECT_NE(from_dir.text.find("tiny"), std::string::npos);
  EXPECT_NE(from_dir.text.find("Acc"), std::string::npos);
  EXPECT_EQ(cmd_export_report(spec.out_dir / "report.jsonl").text, from_dir.text);
  EXPECT_FALSE(cmd_export_report(root_ / "nothing").ok());
}

TEST(Workers, EnvironmentCapsThePool) {
  ::setenv("KLCBL_THREADS", "1", 1);
  EXPECT_EQ(worker_threads(), 1u);
  ::setenv("KLCBL_THREADS", "junk", 1);
  EXPECT_GE(worker_threads(), 1u);
  ::unsetenv("KLCBL_THREADS");
}

}  // namespace
}  // namespace klcbl
