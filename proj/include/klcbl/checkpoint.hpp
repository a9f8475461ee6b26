#pragma once

// Checkpoint file: one JSON header line
//   {"format_version":1,"dtype":"f32le"|"f64le","model":{...},
//    "fusion_layout":[...],"embedding":{...},"seed":S,"params":[names]}
// then for each parameter a JSON line {"name","shape","count"} followed by
// `count` little-endian values of the header dtype.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "klcbl/model.hpp"

namespace klcbl {

/// Where the embeddings a model was trained on came from.
struct EmbeddingSource {
  std::string kind = "hash";  // "hash" or "file"
  std::size_t dim = kDefaultEmbeddingDim;
  std::size_t max_tokens = kDefaultMaxTokens;

  friend bool operator==(const EmbeddingSource&, const EmbeddingSource&) = default;
};

template <typename T>
struct Checkpoint {
  KlcblModel<T> model;
  EmbeddingSource embedding;
  std::uint64_t seed = 0;
};

template <typename T>
void save_checkpoint(std::ostream& out, const KlcblModel<T>& model, const EmbeddingSource& embedding,
                     std::uint64_t seed);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const KlcblModel<T>& model, const EmbeddingSource& embedding,
                     std::uint64_t seed);

/// Values are converted if the file dtype differs from T.
template <typename T>
Checkpoint<T> load_checkpoint(std::istream& in);
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// "f32le" or "f64le" as recorded in a checkpoint header.
std::string checkpoint_dtype(const std::filesystem::path& path);

}  // namespace klcbl
