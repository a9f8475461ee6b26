#include "klcbl/serialize.hpp"

#include <cstdio>
#include <initializer_list>
#include <string_view>

#include "klcbl/rng.hpp"

namespace klcbl {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, std::string_view what, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(what));
  }
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const ConvConfig& c) {
  j = {{"in_dim", c.in_dim},
       {"out_channels", c.out_channels},
       {"kernel_size", c.kernel_size},
       {"stride", c.stride},
       {"padding", c.padding},
       {"use_bias", c.use_bias},
       {"activation", c.activation == Activation::kRelu ? "relu" : "none"}};
}

void from_json(const json& j, ConvConfig& c) {
  reject_unknown(j, "cnn", {"in_dim", "out_channels", "kernel_size", "stride", "padding", "use_bias", "activation"});
  read(j, "in_dim", c.in_dim);
  read(j, "out_channels", c.out_channels);
  read(j, "kernel_size", c.kernel_size);
  read(j, "stride", c.stride);
  read(j, "padding", c.padding);
  read(j, "use_bias", c.use_bias);
  if (j.contains("activation")) {
    std::string a;
    read(j, "activation", a);
    if (a == "relu") {
      c.activation = Activation::kRelu;
    } else if (a == "none") {
      c.activation = Activation::kNone;
    } else {
      throw ConfigError("cnn.activation must be relu or none, got '" + a + "'");
    }
  }
}

void to_json(json& j, const LstmConfig& c) {
  j = {{"in_dim", c.in_dim}, {"hidden_per_direction", c.hidden_per_direction}, {"bidirectional", c.bidirectional}};
}

void from_json(const json& j, LstmConfig& c) {
  reject_unknown(j, "lstm", {"in_dim", "hidden_per_direction", "bidirectional"});
  read(j, "in_dim", c.in_dim);
  read(j, "hidden_per_direction", c.hidden_per_direction);
  read(j, "bidirectional", c.bidirectional);
}

void to_json(json& j, const SplineGrid& g) {
  j = {{"grid_min", g.grid_min}, {"grid_max", g.grid_max}, {"intervals", g.intervals}, {"order", g.order}};
}

void from_json(const json& j, SplineGrid& g) {
  reject_unknown(j, "grid", {"grid_min", "grid_max", "intervals", "order"});
  read(j, "grid_min", g.grid_min);
  read(j, "grid_max", g.grid_max);
  read(j, "intervals", g.intervals);
  read(j, "order", g.order);
}

void to_json(json& j, const HeadConfig& c) {
  j = {{"kind", head_kind_name(c.kind)}, {"in_dim", c.in_dim},  {"hidden_dim", c.hidden_dim},
       {"out_dim", c.out_dim},           {"grid", c.grid},      {"coeff_init_std", c.coeff_init_std}};
}

void from_json(const json& j, HeadConfig& c) {
  reject_unknown(j, "head", {"kind", "in_dim", "hidden_dim", "out_dim", "grid", "coeff_init_std"});
  if (j.contains("kind")) {
    std::string k;
    read(j, "kind", k);
    c.kind = parse_head_kind(k);
  }
  read(j, "in_dim", c.in_dim);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "out_dim", c.out_dim);
  if (j.contains("grid")) from_json(j.at("grid"), c.grid);
  read(j, "coeff_init_std", c.coeff_init_std);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"embedding_dim", c.embedding_dim},
       {"use_cnn", c.use_cnn},
       {"use_bilstm", c.use_bilstm},
       {"use_lert_passthrough", c.use_lert_passthrough},
       {"cnn", c.cnn},
       {"lstm", c.lstm},
       {"head", c.head}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, "model", {"embedding_dim", "use_cnn", "use_bilstm", "use_lert_passthrough", "cnn", "lstm", "head"});
  read(j, "embedding_dim", c.embedding_dim);
  read(j, "use_cnn", c.use_cnn);
  read(j, "use_bilstm", c.use_bilstm);
  read(j, "use_lert_passthrough", c.use_lert_passthrough);
  if (j.contains("cnn")) from_json(j.at("cnn"), c.cnn);
  if (j.contains("lstm")) from_json(j.at("lstm"), c.lstm);
  if (j.contains("head")) from_json(j.at("head"), c.head);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},           {"beta2", c.beta2},   {"epsilon", c.epsilon},
       {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j, "train", {"batch_size", "epochs", "learning_rate", "beta1", "beta2", "epsilon", "seed"});
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "seed", c.seed);
}

void to_json(json& j, const FusionSlot& s) { j = {{"channel", s.channel}, {"width", s.width}}; }

void to_json(json& j, const ConfusionMatrix& cm) {
  j = json::array();
  for (const auto& row : cm.counts) j.push_back(row);
}

void to_json(json& j, const MetricsReport& r) {
  json per_class = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class", c},
                         {"name", class_name(c)},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support},
                         {"zero_division", m.zero_division}});
  }
  j = {{"acc", r.accuracy},
       {"p", r.weighted.precision},
       {"r", r.weighted.recall},
       {"f1", r.weighted.f1},
       {"avg_loss", r.average_loss},
       {"per_class", per_class},
       {"confusion", r.confusion},
       {"zero_division", r.zero_division}};
}

std::string json_hash(const json& j) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace klcbl
