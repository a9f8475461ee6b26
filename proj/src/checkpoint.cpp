#include "klcbl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "klcbl/serialize.hpp"

namespace klcbl {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32le" : "f64le";
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  json line(const char* what) {
    const std::uint64_t at = offset_;
    std::string text;
    if (!std::getline(in_, text)) throw FormatError(std::string("checkpoint: missing ") + what, FormatError::Unit::kByte, at);
    offset_ += text.size() + 1;
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint: malformed ") + what + ": " + e.what(), FormatError::Unit::kByte, at);
    }
  }

  template <typename F>
  std::vector<F> values(std::size_t count, const std::string& name) {
    std::vector<F> out(count);
    const auto bytes = static_cast<std::streamsize>(count * sizeof(F));
    in_.read(reinterpret_cast<char*>(out.data()), bytes);
    if (in_.gcount() != bytes) {
      throw FormatError("checkpoint: truncated values for '" + name + "'", FormatError::Unit::kByte,
                        offset_ + static_cast<std::uint64_t>(in_.gcount()));
    }
    offset_ += static_cast<std::uint64_t>(bytes);
    return out;
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

template <typename T, typename F>
void fill(Tensor<T>& target, const std::vector<F>& values) {
  auto dst = target.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
}

}  // namespace

template <typename T>
void save_checkpoint(std::ostream& out, const KlcblModel<T>& model, const EmbeddingSource& embedding,
                     std::uint64_t seed) {
  const auto params = model.parameters();
  json names = json::array();
  for (const auto& p : params) names.push_back(p.name);
  const json header = {{"format_version", 1},
                       {"dtype", dtype_name<T>()},
                       {"model", model.config()},
                       {"fusion_layout", model.config().fusion_layout()},
                       {"embedding", {{"source", embedding.kind}, {"dim", embedding.dim}, {"max_tokens", embedding.max_tokens}}},
                       {"seed", seed},
                       {"params", names}};
  out << header.dump() << '\n';
  for (const auto& p : params) {
    const json block = {{"name", p.name}, {"shape", p.tensor.shape()}, {"count", p.tensor.size()}};
    out << block.dump() << '\n';
    const auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) throw Error("checkpoint: write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const KlcblModel<T>& model, const EmbeddingSource& embedding,
                     std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  save_checkpoint(out, model, embedding, seed);
}

template <typename T>
Checkpoint<T> load_checkpoint(std::istream& in) {
  Reader reader(in);
  const json header = reader.line("header");
  ModelConfig cfg;
  EmbeddingSource embedding;
  std::string dtype;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  try {
    if (header.at("format_version").get<int>() != 1) {
      throw FormatError("checkpoint: unsupported format_version " + header.at("format_version").dump(),
                        FormatError::Unit::kByte, 0);
    }
    dtype = header.at("dtype").get<std::string>();
    cfg = header.at("model").get<ModelConfig>();
    const auto& e = header.at("embedding");
    embedding.kind = e.at("source").get<std::string>();
    embedding.dim = e.at("dim").get<std::size_t>();
    embedding.max_tokens = e.at("max_tokens").get<std::size_t>();
    seed = header.at("seed").get<std::uint64_t>();
    names = header.at("params").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what(), FormatError::Unit::kByte, 0);
  }
  if (dtype != "f32le" && dtype != "f64le") {
    throw FormatError("checkpoint: unknown dtype '" + dtype + "'", FormatError::Unit::kByte, 0);
  }
  cfg.validate();

  Checkpoint<T> ck{KlcblModel<T>(cfg, seed), embedding, seed};
  auto params = ck.model.parameters();
  if (names.size() != params.size()) {
    throw FormatError("checkpoint: header lists " + std::to_string(names.size()) + " parameters, model has " +
                          std::to_string(params.size()),
                      FormatError::Unit::kByte, 0);
  }
  for (auto& p : params) {
    const std::uint64_t at = reader.offset();
    const json block = reader.line("parameter block");
    std::string name;
    Shape shape;
    std::size_t count = 0;
    try {
      name = block.at("name").get<std::string>();
      shape = block.at("shape").get<Shape>();
      count = block.at("count").get<std::size_t>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint: bad parameter block: ") + e.what(), FormatError::Unit::kByte, at);
    }
    if (name != p.name) {
      throw FormatError("checkpoint: expected parameter '" + p.name + "', found '" + name + "'",
                        FormatError::Unit::kByte, at);
    }
    if (shape != p.tensor.shape() || count != p.tensor.size()) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_to_string(shape) +
                            ", model expects " + shape_to_string(p.tensor.shape()),
                        FormatError::Unit::kByte, at);
    }
    if (dtype == "f32le") {
      fill(p.tensor, reader.template values<float>(count, name));
    } else {
      fill(p.tensor, reader.template values<double>(count, name));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("checkpoint: trailing data", FormatError::Unit::kByte, reader.offset());
  }
  return ck;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint<T>(in);
}

std::string checkpoint_dtype(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  Reader reader(in);
  const json header = reader.line("header");
  if (!header.contains("dtype") || !header["dtype"].is_string()) {
    throw FormatError("checkpoint: header has no dtype", FormatError::Unit::kByte, 0);
  }
  return header["dtype"].get<std::string>();
}

#define KLCBL_INSTANTIATE(T)                                                                                        \
  template void save_checkpoint<T>(std::ostream&, const KlcblModel<T>&, const EmbeddingSource&, std::uint64_t);   \
  template void save_checkpoint<T>(const std::filesystem::path&, const KlcblModel<T>&, const EmbeddingSource&,     \
                                   std::uint64_t);                                                                 \
  template Checkpoint<T> load_checkpoint<T>(std::istream&);                                                        \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

KLCBL_INSTANTIATE(float)
KLCBL_INSTANTIATE(double)

}  // namespace klcbl
