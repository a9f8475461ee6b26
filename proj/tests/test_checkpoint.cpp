#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "klcbl/checkpoint.hpp"
#include "support.hpp"

namespace klcbl {
namespace {

using testing::random_example;

ModelConfig small_config() { return ModelConfig::miniature(8, 4, 6, 5); }

template <typename T>
std::string saved(const KlcblModel<T>& model, EmbeddingSource src = {"hash", 8, 16}, std::uint64_t seed = 7) {
  std::ostringstream out;
  save_checkpoint(out, model, src, seed);
  return out.str();
}

template <typename T>
Checkpoint<T> loaded(const std::string& bytes) {
  std::istringstream in(bytes);
  return load_checkpoint<T>(in);
}

template <typename A, typename B>
void expect_same_values(const KlcblModel<A>& a, const KlcblModel<B>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) {
    EXPECT_EQ(pa[k].name, pb[k].name);
    EXPECT_EQ(pa[k].tensor.shape(), pb[k].tensor.shape());
    const auto x = pa[k].tensor.data();
    const auto y = pb[k].tensor.data();
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(static_cast<double>(x[i]), static_cast<double>(y[i]));
  }
}

nlohmann::json header_of(const std::string& bytes) { return nlohmann::json::parse(bytes.substr(0, bytes.find('\n'))); }

std::string with_header(const std::string& bytes, const nlohmann::json& header) {
  return header.dump() + bytes.substr(bytes.find('\n'));
}

std::size_t format_position(const std::string& bytes) {
  try {
    loaded<double>(bytes);
  } catch (const FormatError& e) {
    return e.position();
  }
  ADD_FAILURE() << "no FormatError";
  return 0;
}

TEST(Checkpoint, DoubleRoundTripIsBitExact) {
  KlcblModel<double> model(small_config(), 3);
  const auto bytes = saved(model);
  const auto ck = loaded<double>(bytes);
  EXPECT_EQ(ck.model.config(), model.config());
  EXPECT_EQ(ck.embedding, (EmbeddingSource{"hash", 8, 16}));
  EXPECT_EQ(ck.seed, 7u);
  expect_same_values(model, ck.model);
  SplitMix64 rng(1);
  const auto ex = random_example(4, 8, rng);
  const auto a = model.forward(ex), b = ck.model.forward(ex);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.at(c), b.at(c));
  EXPECT_EQ(saved(ck.model), bytes);
}

TEST(Checkpoint, FloatRoundTripAndWidening) {
  auto cfg = small_config();
  cfg.head.kind = HeadKind::kDense;
  KlcblModel<float> model(cfg, 4);
  const auto bytes = saved(model);
  EXPECT_EQ(header_of(bytes)["dtype"], "f32le");
  expect_same_values(model, loaded<float>(bytes).model);
  expect_same_values(model, loaded<double>(bytes).model);
  EXPECT_EQ(header_of(saved(KlcblModel<double>(cfg, 4)))["dtype"], "f64le");
}

TEST(Checkpoint, HeaderRecordsLayoutAndParameters) {
  auto cfg = small_config();
  cfg.use_cnn = false;
  KlcblModel<double> model(cfg.with_matching_head(), 5);
  const auto h = header_of(saved(model));
  EXPECT_EQ(h["format_version"], 1);
  ASSERT_EQ(h["fusion_layout"].size(), 2u);
  EXPECT_EQ(h["fusion_layout"][0]["channel"], "lert");
  EXPECT_EQ(h["fusion_layout"][0]["width"], 8);
  EXPECT_EQ(h["fusion_layout"][1]["channel"], "bilstm");
  EXPECT_EQ(h["fusion_layout"][1]["width"], 6);
  EXPECT_EQ(h["embedding"]["dim"], 8);
  std::vector<std::string> names;
  for (const auto& p : model.parameters()) names.push_back(p.name);
  EXPECT_EQ(h["params"].get<std::vector<std::string>>(), names);
}

TEST(Checkpoint, FilesAndDtypeProbe) {
  const auto dir = std::filesystem::temp_directory_path() / "klcbl_ckpt_test";
  std::filesystem::create_directories(dir);
  KlcblModel<float> model(small_config(), 6);
  save_checkpoint(dir / "m.bin", model, EmbeddingSource{"file", 8, 64}, 9);
  EXPECT_EQ(checkpoint_dtype(dir / "m.bin"), "f32le");
  const auto ck = load_checkpoint<float>(dir / "m.bin");
  EXPECT_EQ(ck.embedding.kind, "file");
  expect_same_values(model, ck.model);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, TruncationIsRejectedWithAnOffset) {
  KlcblModel<double> model(small_config(), 7);
  const auto bytes = saved(model);
  SplitMix64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cut = bytes.find('\n') + 1 + rng.below(bytes.size() - bytes.find('\n') - 1);
    const auto pos = format_position(bytes.substr(0, cut));
    EXPECT_LE(pos, cut);
    EXPECT_GT(pos, 0u);
  }
  EXPECT_THROW(loaded<double>(""), FormatError);
}

TEST(Checkpoint, TrailingBytesAreRejected) {
  KlcblModel<double> model(small_config(), 8);
  const auto bytes = saved(model);
  EXPECT_EQ(format_position(bytes + "x"), bytes.size());
}

TEST(Checkpoint, MalformedHeadersAreRejected) {
  KlcblModel<double> model(small_config(), 9);
  const auto bytes = saved(model);
  auto h = header_of(bytes);
  h["format_version"] = 2;
  EXPECT_EQ(format_position(with_header(bytes, h)), 0u);
  h = header_of(bytes);
  h["dtype"] = "bf16";
  EXPECT_EQ(format_position(with_header(bytes, h)), 0u);
  h = header_of(bytes);
  h["params"].erase(h["params"].size() - 1);
  EXPECT_THROW(loaded<double>(with_header(bytes, h)), FormatError);
  EXPECT_EQ(format_position("{not json\n"), 0u);
}

TEST(Checkpoint, ParameterBlockMismatchNamesTheParameter) {
  KlcblModel<double> model(small_config(), 10);
  auto bytes = saved(model);
  const std::string needle = "\"name\":\"cnn.weight\"";
  const auto at = bytes.find(needle);
  ASSERT_NE(at, std::string::npos);
  bytes.replace(at, needle.size(), "\"name\":\"cnn.weigxt\"");
  try {
    loaded<double>(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("cnn.weight"), std::string::npos);
    EXPECT_EQ(e.position(), bytes.rfind('\n', at) + 1);
  }
}

}  // namespace
}  // namespace klcbl
