#include "klcbl/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "klcbl/rng.hpp"

namespace klcbl {

using json = nlohmann::json;

std::string_view class_name(int label) {
  switch (label) {
    case 0: return "telecom fraud";
    case 1: return "non-telecom fraud";
    case 2: return "other incident";
    default: return "unknown";
  }
}

DatasetSplit split_ids(std::vector<std::string> ids, std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (n < 3) throw ShapeError("split needs at least 3 examples, got " + std::to_string(n));
  SplitMix64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(ids[i], ids[j]);
  }
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.valid.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  split.test.assign(ids.begin() + n_train + n_valid, ids.end());
  return split;
}

DatasetSplit split_dataset(const std::vector<RawExample>& examples, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& ex : examples) ids.push_back(ex.id);
  return split_ids(std::move(ids), seed);
}

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alnum(unsigned char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

std::size_t utf8_length(unsigned char lead) {
  if (lead >= 0xF0) return 4;
  if (lead >= 0xE0) return 3;
  if (lead >= 0xC0) return 2;
  return 1;
}

// Not producible by tokenize(): control characters are separators or dropped.
constexpr std::string_view kEmptyToken = "\x01<empty>";

std::vector<double> token_vector(std::string_view token, std::size_t dim) {
  SplitMix64 rng(fnv1a64(token));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c >= 0x80) {
      flush();
      const std::size_t len = std::min(utf8_length(c), text.size() - i);
      tokens.emplace_back(text.substr(i, len));
      i += len;
    } else if (is_alnum(c)) {
      word.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
      ++i;
    } else {
      flush();
      if (!is_space(c) && c >= 0x20 && c != 0x7F) tokens.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  flush();
  return tokens;
}

HashEmbedding hash_embed(std::string_view text, std::size_t dim, std::size_t max_tokens) {
  if (dim == 0) throw ConfigError("hash_embed: dim must be at least 1");
  if (max_tokens == 0) throw ConfigError("hash_embed: max_tokens must be at least 1");
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) tokens.emplace_back(kEmptyToken);
  if (tokens.size() > max_tokens) tokens.resize(max_tokens);

  HashEmbedding out;
  out.steps = tokens.size();
  out.tokens.reserve(out.steps * dim);
  std::vector<double> mean(dim, 0.0);
  for (const auto& token : tokens) {
    const auto v = token_vector(token, dim);
    for (std::size_t d = 0; d < dim; ++d) {
      out.tokens.push_back(static_cast<float>(v[d]));
      mean[d] += v[d];
    }
  }
  double norm2 = 0.0;
  for (double x : mean) norm2 += x * x;
  if (norm2 == 0.0) {
    // Tokens cancelled exactly; fall back to the first token.
    out.pooled.assign(out.tokens.begin(), out.tokens.begin() + static_cast<std::ptrdiff_t>(dim));
    return out;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  out.pooled.reserve(dim);
  for (double x : mean) out.pooled.push_back(static_cast<float>(x * inv));
  return out;
}

EmbeddedExample embed_example(const RawExample& example, std::size_t dim, std::size_t max_tokens) {
  HashEmbedding h = hash_embed(example.text, dim, max_tokens);
  EmbeddedExample out;
  out.id = example.id;
  out.label = example.label;
  out.steps = h.steps;
  out.dim = dim;
  out.tokens = std::move(h.tokens);
  out.pooled = std::move(h.pooled);
  return out;
}

std::vector<EmbeddedExample> embed_dataset(const std::vector<RawExample>& examples, std::size_t dim,
                                           std::size_t max_tokens) {
  std::vector<EmbeddedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(embed_example(ex, dim, max_tokens));
  return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (fields.size() + 1 < max_fields) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  fields.push_back(line.substr(start));
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<RawExample> parse_dataset(std::istream& in) {
  std::vector<RawExample> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line, 3);
    if (fields.size() != 3 || fields[0].empty()) {
      throw FormatError("expected id<TAB>label<TAB>text", FormatError::Unit::kLine, line_no);
    }
    if (fields[1].size() != 1 || fields[1][0] < '0' || fields[1][0] > '2') {
      throw FormatError("example '" + fields[0] + "' has label '" + fields[1] + "', valid labels are {0,1,2}",
                        FormatError::Unit::kLine, line_no);
    }
    if (!seen.insert(fields[0]).second) {
      throw FormatError("duplicate example id '" + fields[0] + "'", FormatError::Unit::kLine, line_no);
    }
    out.push_back({fields[0], fields[2], fields[1][0] - '0'});
  }
  return out;
}

std::vector<RawExample> read_dataset(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_dataset(in);
}

void write_dataset(const std::filesystem::path& path, const std::vector<RawExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& ex : examples) out << ex.id << '\t' << ex.label << '\t' << ex.text << '\n';
}

std::vector<RawExample> read_unlabeled(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<RawExample> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_tabs(line, 3);
    if (fields.size() < 2 || fields[0].empty()) {
      throw FormatError("expected id<TAB>text or id<TAB>label<TAB>text", FormatError::Unit::kLine, line_no);
    }
    if (!seen.insert(fields[0]).second) {
      throw FormatError("duplicate example id '" + fields[0] + "'", FormatError::Unit::kLine, line_no);
    }
    out.push_back({fields[0], fields.back(), 0});
  }
  return out;
}

namespace {

void put_f32le(std::string& buf, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<char>((bits >> s) & 0xFFu));
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_embeddings(std::ostream& out, const std::vector<EmbeddedExample>& examples) {
  const std::size_t dim = examples.empty() ? kDefaultEmbeddingDim : examples.front().dim;
  json header = {{"format_version", 1}, {"dim", dim}, {"count", examples.size()}, {"dtype", "f32le"}};
  out << header.dump() << '\n';
  std::string payload;
  for (const auto& ex : examples) {
    if (ex.dim != dim) {
      throw ShapeError("example '" + ex.id + "' has dim " + std::to_string(ex.dim) + ", file dim is " +
                       std::to_string(dim));
    }
    if (ex.steps == 0 || ex.tokens.size() != ex.steps * dim || ex.pooled.size() != dim) {
      throw ShapeError("example '" + ex.id + "' has inconsistent token/pooled sizes");
    }
    json meta = {{"id", ex.id}, {"label", ex.label}, {"T", ex.steps}};
    out << meta.dump() << '\n';
    payload.clear();
    payload.reserve((ex.steps + 1) * dim * 4);
    for (float v : ex.tokens) put_f32le(payload, v);
    for (float v : ex.pooled) put_f32le(payload, v);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw Error("write failed while emitting embeddings");
}

std::vector<EmbeddedExample> read_embeddings(std::istream& in, std::optional<std::size_t> expected_dim) {
  using Unit = FormatError::Unit;
  std::uint64_t offset = 0;
  std::string line;

  auto read_line = [&](const char* what) -> json {
    const std::uint64_t at = offset;
    if (!std::getline(in, line)) throw FormatError(std::string("unexpected end of file, expected ") + what, Unit::kByte, at);
    offset += line.size() + 1;
    try {
      json j = json::parse(line);
      if (!j.is_object()) throw FormatError(std::string(what) + " is not a JSON object", Unit::kByte, at);
      return j;
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed ") + what + ": " + e.what(), Unit::kByte, at);
    }
  };

  const json header = read_line("header");
  std::size_t dim = 0, count = 0;
  try {
    if (header.at("format_version").get<int>() != 1) {
      throw FormatError("unknown format_version " + header.at("format_version").dump(), Unit::kByte, 0);
    }
    if (header.at("dtype").get<std::string>() != "f32le") {
      throw FormatError("unsupported dtype " + header.at("dtype").dump(), Unit::kByte, 0);
    }
    dim = header.at("dim").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid header: ") + e.what(), Unit::kByte, 0);
  }
  if (dim == 0) throw FormatError("header dim must be positive", Unit::kByte, 0);
  if (expected_dim && *expected_dim != dim) {
    throw ShapeError("embedding file dim " + std::to_string(dim) + " does not match expected dim " +
                     std::to_string(*expected_dim));
  }

  std::vector<EmbeddedExample> out;
  out.reserve(count);
  std::unordered_set<std::string> seen;
  std::vector<unsigned char> buffer;
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint64_t meta_at = offset;
    const json meta = read_line("record metadata");
    EmbeddedExample ex;
    try {
      ex.id = meta.at("id").get<std::string>();
      ex.label = meta.at("label").get<int>();
      ex.steps = meta.at("T").get<std::size_t>();
      if (meta.contains("dim") && meta.at("dim").get<std::size_t>() != dim) {
        throw FormatError("record '" + ex.id + "' has width " + meta.at("dim").dump() + " but header dim is " +
                              std::to_string(dim),
                          Unit::kByte, meta_at);
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("invalid record metadata: ") + e.what(), Unit::kByte, meta_at);
    }
    if (ex.label < 0 || ex.label >= kNumClasses) {
      throw FormatError("record '" + ex.id + "' has label " + std::to_string(ex.label) + ", valid labels are {0,1,2}",
                        Unit::kByte, meta_at);
    }
    if (ex.steps == 0) throw FormatError("record '" + ex.id + "' has T=0", Unit::kByte, meta_at);
    if (!seen.insert(ex.id).second) throw FormatError("duplicate record id '" + ex.id + "'", Unit::kByte, meta_at);
    ex.dim = dim;
    const std::size_t expected = (ex.steps + 1) * dim * 4;
    buffer.resize(expected);
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(expected));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != expected) {
      throw FormatError("payload length mismatch for record '" + ex.id + "': expected " + std::to_string(expected) +
                            " bytes, found " + std::to_string(got),
                        Unit::kByte, offset);
    }
    offset += expected;
    ex.tokens.resize(ex.steps * dim);
    ex.pooled.resize(dim);
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) ex.tokens[i] = get_f32le(buffer.data() + 4 * i);
    const unsigned char* pooled = buffer.data() + 4 * ex.tokens.size();
    for (std::size_t i = 0; i < dim; ++i) ex.pooled[i] = get_f32le(pooled + 4 * i);
    out.push_back(std::move(ex));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing data after " + std::to_string(count) + " records", Unit::kByte, offset);
  }
  return out;
}

void write_embedding_file(const std::filesystem::path& path, const std::vector<EmbeddedExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_embeddings(out, examples);
}

std::vector<EmbeddedExample> read_embedding_file(const std::filesystem::path& path,
                                                 std::optional<std::size_t> expected_dim) {
  auto in = open_input(path, std::ios::in | std::ios::binary);
  return read_embeddings(in, expected_dim);
}

std::vector<EmbeddedExample> select(const std::vector<EmbeddedExample>& all, const std::vector<std::string>& ids) {
  std::unordered_map<std::string_view, const EmbeddedExample*> by_id;
  for (const auto& ex : all) by_id.emplace(ex.id, &ex);
  std::vector<EmbeddedExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("unknown example id '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace klcbl
