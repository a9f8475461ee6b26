#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "klcbl/tensor.hpp"

namespace klcbl {

inline constexpr int kNumClasses = 3;

/// Class ids in the order the incident categories are listed.
enum class IncidentClass : int { kTelecomFraud = 0, kNonTelecomFraud = 1, kOther = 2 };

std::string_view class_name(int label);

struct RawExample {
  std::string id;
  std::string text;
  int label = 0;
};

/// Token-level embeddings ([steps x dim], row-major) plus the pooled sentence
/// vector, as produced by an upstream encoder or by hash_embed.
struct EmbeddedExample {
  std::string id;
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::vector<float> tokens;
  std::vector<float> pooled;
  int label = 0;

  template <typename T>
  Tensor<T> token_tensor() const {
    return Tensor<T>({steps, dim}, std::vector<T>(tokens.begin(), tokens.end()));
  }
  template <typename T>
  Tensor<T> pooled_tensor() const {
    return Tensor<T>({dim}, std::vector<T>(pooled.begin(), pooled.end()));
  }
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// 8:1:1 partition of the ids: a SplitMix64-driven Fisher-Yates shuffle, then
/// floor(0.8N) train, floor(0.1N) valid, the remainder test.
DatasetSplit split_dataset(const std::vector<RawExample>& examples, std::uint64_t seed);
DatasetSplit split_ids(std::vector<std::string> ids, std::uint64_t seed);

/// Lowercased ASCII alphanumeric runs, single ASCII punctuation marks, and
/// single non-ASCII code points, in text order.
std::vector<std::string> tokenize(std::string_view text);

struct HashEmbedding {
  std::size_t steps = 0;
  std::vector<float> tokens;
  std::vector<float> pooled;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 768;
inline constexpr std::size_t kDefaultMaxTokens = 64;

/// Unit-norm pseudo-random vector per token (seeded by the token's hash) and
/// their renormalised mean. Deterministic in (text, dim, max_tokens).
HashEmbedding hash_embed(std::string_view text, std::size_t dim = kDefaultEmbeddingDim,
                         std::size_t max_tokens = kDefaultMaxTokens);

EmbeddedExample embed_example(const RawExample& example, std::size_t dim = kDefaultEmbeddingDim,
                              std::size_t max_tokens = kDefaultMaxTokens);
std::vector<EmbeddedExample> embed_dataset(const std::vector<RawExample>& examples, std::size_t dim,
                                           std::size_t max_tokens);

// Dataset file: `id<TAB>label<TAB>text` per line, `#` lines ignored.
std::vector<RawExample> parse_dataset(std::istream& in);
std::vector<RawExample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<RawExample>& examples);

/// Input for prediction: `id<TAB>text` or a full dataset line (label ignored).
std::vector<RawExample> read_unlabeled(const std::filesystem::path& path);

// Embedding interchange file: a JSON header line
// {"format_version":1,"dim":D,"count":N,"dtype":"f32le"}, then per example a
// JSON line {"id","label","T"} followed by (T+1)*D little-endian float32
// values (T token rows, then the pooled row).
void write_embeddings(std::ostream& out, const std::vector<EmbeddedExample>& examples);
std::vector<EmbeddedExample> read_embeddings(std::istream& in, std::optional<std::size_t> expected_dim = std::nullopt);
void write_embedding_file(const std::filesystem::path& path, const std::vector<EmbeddedExample>& examples);
std::vector<EmbeddedExample> read_embedding_file(const std::filesystem::path& path,
                                                 std::optional<std::size_t> expected_dim = std::nullopt);

/// Examples whose ids are listed, in list order.
std::vector<EmbeddedExample> select(const std::vector<EmbeddedExample>& all, const std::vector<std::string>& ids);

}  // namespace klcbl
