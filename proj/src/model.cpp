#include "klcbl/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "klcbl/ops.hpp"
#include "klcbl/rng.hpp"

namespace klcbl {

std::vector<FusionSlot> ModelConfig::fusion_layout() const {
  std::vector<FusionSlot> slots;
  if (use_lert_passthrough) slots.push_back({"lert", embedding_dim});
  if (use_cnn) slots.push_back({"cnn", cnn.out_channels});
  if (use_bilstm) slots.push_back({"bilstm", lstm.output_dim()});
  return slots;
}

std::size_t ModelConfig::fusion_dim() const {
  std::size_t n = 0;
  for (const auto& s : fusion_layout()) n += s.width;
  return n;
}

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (!use_cnn && !use_bilstm && !use_lert_passthrough) throw ConfigError("at least one channel must be enabled");
  if (use_cnn) {
    cnn.validate();
    if (cnn.in_dim != embedding_dim) {
      throw ConfigError("cnn.in_dim " + std::to_string(cnn.in_dim) + " != embedding_dim " +
                        std::to_string(embedding_dim));
    }
  }
  if (use_bilstm) {
    lstm.validate();
    if (lstm.in_dim != embedding_dim) {
      throw ConfigError("lstm.in_dim " + std::to_string(lstm.in_dim) + " != embedding_dim " +
                        std::to_string(embedding_dim));
    }
  }
  head.validate();
  if (head.in_dim != fusion_dim()) {
    throw ConfigError("head.in_dim " + std::to_string(head.in_dim) + " != fusion dim " + std::to_string(fusion_dim()));
  }
  if (head.out_dim != static_cast<std::size_t>(kNumClasses)) {
    throw ConfigError("head.out_dim must be " + std::to_string(kNumClasses) + ", got " + std::to_string(head.out_dim));
  }
}

ModelConfig ModelConfig::with_matching_head() const {
  ModelConfig out = *this;
  out.head.in_dim = out.fusion_dim();
  return out;
}

ModelConfig ModelConfig::miniature(std::size_t embedding, std::size_t conv, std::size_t lstm_total,
                                   std::size_t hidden) {
  if (lstm_total % 2 != 0) throw ConfigError("miniature: BiLSTM width must be even");
  ModelConfig cfg;
  cfg.embedding_dim = embedding;
  cfg.cnn.in_dim = embedding;
  cfg.cnn.out_channels = conv;
  cfg.lstm.in_dim = embedding;
  cfg.lstm.hidden_per_direction = lstm_total / 2;
  cfg.head.hidden_dim = hidden;
  return cfg.with_matching_head();
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

namespace {

std::uint64_t component_seed(std::uint64_t seed, std::string_view component) {
  return SplitMix64(seed ^ fnv1a64(component)).next();
}

template <typename T>
ClassifierHead<T> make_head(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(component_seed(seed, "head"));
  return ClassifierHead<T>(cfg.head, rng);
}

}  // namespace

template <typename T>
KlcblModel<T>::KlcblModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), head_(make_head<T>(cfg_, seed)) {
  if (cfg_.use_cnn) {
    SplitMix64 rng(component_seed(seed, "cnn"));
    cnn_.emplace(cfg_.cnn, rng);
  }
  if (cfg_.use_bilstm) {
    SplitMix64 rng(component_seed(seed, "bilstm"));
    bilstm_.emplace(cfg_.lstm, rng);
  }
}

template <typename T>
Tensor<T> KlcblModel<T>::fuse(const EmbeddedExample& ex) const {
  if (ex.dim != cfg_.embedding_dim) {
    throw ShapeError("example '" + ex.id + "' has embedding width " + std::to_string(ex.dim) + ", model expects " +
                     std::to_string(cfg_.embedding_dim));
  }
  std::vector<Tensor<T>> parts;
  const bool needs_tokens = cnn_ || bilstm_;
  const Tensor<T> tokens = needs_tokens ? ex.token_tensor<T>() : Tensor<T>();
  if (cfg_.use_lert_passthrough) parts.push_back(ex.pooled_tensor<T>());
  if (cnn_) parts.push_back(cnn_->forward(tokens));
  if (bilstm_) parts.push_back(bilstm_->forward(tokens));
  return parts.size() == 1 ? parts.front() : concat(parts);
}

template <typename T>
Tensor<T> KlcblModel<T>::forward(const EmbeddedExample& ex) const {
  return head_.forward(fuse(ex));
}

template <typename T>
Tensor<T> KlcblModel<T>::forward_batch(std::span<const EmbeddedExample* const> batch) const {
  if (batch.empty()) throw ShapeError("forward_batch: empty batch");
  std::vector<Tensor<T>> rows;
  rows.reserve(batch.size());
  const std::size_t width = cfg_.fusion_dim();
  for (const EmbeddedExample* ex : batch) rows.push_back(reshape(fuse(*ex), {1, width}));
  const Tensor<T> fused = rows.size() == 1 ? rows.front() : concat(rows, 0);
  return head_.forward(fused);
}

template <typename T>
std::vector<NamedTensor<T>> KlcblModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  if (cnn_) {
    out.push_back({"cnn.weight", cnn_->weights().weight});
    if (cnn_->weights().bias) out.push_back({"cnn.bias", *cnn_->weights().bias});
  }
  if (bilstm_) {
    auto add_direction = [&](const std::string& prefix, const LstmWeights<T>& w) {
      out.push_back({prefix + ".input", w.input});
      out.push_back({prefix + ".recurrent", w.recurrent});
      out.push_back({prefix + ".bias", w.bias});
    };
    add_direction("bilstm.forward", bilstm_->forward_weights());
    if (cfg_.lstm.bidirectional) add_direction("bilstm.backward", bilstm_->backward_weights());
  }
  if (head_.kan()) {
    out.push_back({"head.hidden.omega", head_.kan()->hidden.omega()});
    out.push_back({"head.hidden.coeffs", head_.kan()->hidden.coeffs()});
    out.push_back({"head.output.omega", head_.kan()->output.omega()});
    out.push_back({"head.output.coeffs", head_.kan()->output.coeffs()});
  } else {
    out.push_back({"head.weight", head_.dense()->weight});
    out.push_back({"head.bias", head_.dense()->bias});
  }
  return out;
}

template <typename T>
std::size_t KlcblModel<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

template <typename T>
void KlcblModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const bool batched = logits.rank() == 2;
  if (!batched && logits.rank() != 1) throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()));
  const std::size_t rows = batched ? logits.dim(0) : 1;
  const std::size_t classes = batched ? logits.dim(1) : logits.dim(0);
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                     " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw Error("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<double> probs(rows * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = static_cast<double>(z[r * classes]);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(z[r * classes + c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(static_cast<double>(z[r * classes + c]) - mx);
      probs[r * classes + c] = e;
      denom += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= denom;
    const double label_logit = static_cast<double>(z[r * classes + static_cast<std::size_t>(labels[r])]);
    total += std::log(denom) + mx - label_logit;
  }
  const double loss = total / static_cast<double>(rows);
  std::vector<int> targets(labels.begin(), labels.end());
  auto zn = logits.node();
  return detail::make_result<T>("cross_entropy", {}, {static_cast<T>(loss)}, {&logits},
                                [zn, rows, classes, probs = std::move(probs),
                                 targets = std::move(targets)](std::span<const T> g) {
                                  auto gz = detail::grad_sink(zn);
                                  if (gz.empty()) return;
                                  const double scale = static_cast<double>(g[0]) / static_cast<double>(rows);
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < classes; ++c) {
                                      double d = probs[r * classes + c];
                                      if (static_cast<int>(c) == targets[r]) d -= 1.0;
                                      gz[r * classes + c] += static_cast<T>(scale * d);
                                    }
                                });
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

Prediction predict_from_logits(std::span<const double> logits) {
  if (logits.size() != static_cast<std::size_t>(kNumClasses)) {
    throw ShapeError("predict: expected " + std::to_string(kNumClasses) + " logits, got " + std::to_string(logits.size()));
  }
  const auto p = softmax(logits);
  Prediction out;
  for (int c = 0; c < kNumClasses; ++c) out.probs[c] = p[c];
  // Argmax on the logits themselves: exact ties stay ties.
  for (int c = 1; c < kNumClasses; ++c)
    if (logits[c] > logits[out.label]) out.label = c;
  return out;
}

template <typename T>
Prediction predict(const EmbeddedExample& ex, const KlcblModel<T>& model) {
  typename GradTape<T>::Pause pause;
  const Tensor<T> logits = model.forward(ex);
  std::vector<double> z(logits.data().begin(), logits.data().end());
  return predict_from_logits(z);
}

template <typename T>
void adam_step(std::span<NamedTensor<T>> params, AdamState<T>& state, const AdamOptions& options) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.size(), T(0));
      state.second_moment.emplace_back(p.tensor.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) throw Error("adam_step: parameter list changed between steps");
  for (const auto& p : params) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(options.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(options.beta2, t));
  const T lr = static_cast<T>(options.learning_rate);
  const T eps = static_cast<T>(options.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& tensor = params[k].tensor;
    if (!tensor.has_grad()) continue;
    const auto g = tensor.grad();
    auto values = tensor.mutable_data();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) throw NumericError("Adam update overflowed in parameter '" + params[k].name + "'");
    }
  }
}

namespace {

constexpr std::size_t kEvalChunk = 64;

std::vector<const EmbeddedExample*> pointers(const std::vector<EmbeddedExample>& data, std::size_t begin,
                                             std::size_t end) {
  std::vector<const EmbeddedExample*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&data[i]);
  return out;
}

std::vector<int> labels_of(std::span<const EmbeddedExample* const> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto* ex : batch) out.push_back(ex->label);
  return out;
}

}  // namespace

template <typename T>
double average_loss(const KlcblModel<T>& model, const std::vector<EmbeddedExample>& dataset) {
  return evaluate(model, dataset).average_loss;
}

template <typename T>
MetricsReport evaluate(const KlcblModel<T>& model, const std::vector<EmbeddedExample>& dataset) {
  if (dataset.empty()) throw Error("evaluate: empty dataset");
  typename GradTape<T>::Pause pause;
  std::vector<int> predictions, labels;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(dataset.size(), begin + kEvalChunk);
    const auto batch = pointers(dataset, begin, end);
    const auto batch_labels = labels_of(batch);
    const Tensor<T> logits = model.forward_batch(batch);
    loss_sum += static_cast<double>(cross_entropy(logits, batch_labels).item()) * static_cast<double>(batch.size());
    const std::size_t classes = logits.dim(1);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      std::vector<double> z(classes);
      for (std::size_t c = 0; c < classes; ++c) z[c] = static_cast<double>(logits.at(r, c));
      predictions.push_back(predict_from_logits(z).label);
    }
    labels.insert(labels.end(), batch_labels.begin(), batch_labels.end());
  }
  return make_report(confusion(predictions, labels), loss_sum / static_cast<double>(dataset.size()));
}

template <typename T>
TrainReport fit(const std::vector<EmbeddedExample>& train, const std::vector<EmbeddedExample>& valid,
                KlcblModel<T>& model, const TrainConfig& tconf, const EpochCallback& on_epoch) {
  tconf.validate();
  if (train.empty()) throw Error("fit: empty training set");
  TrainReport report;
  report.model = model.config();
  report.train = tconf;
  report.seed = tconf.seed;

  SplitMix64 shuffle_rng(tconf.seed ^ fnv1a64("shuffle"));
  auto params = model.parameters();
  AdamState<T> adam;
  const AdamOptions options = AdamOptions::from(tconf);
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= tconf.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += tconf.batch_size) {
      const std::size_t end = std::min(order.size(), begin + tconf.batch_size);
      std::vector<const EmbeddedExample*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);
      const auto batch_labels = labels_of(batch);

      for (auto& p : params) p.tensor.zero_grad();
      GradTape<T> tape;
      {
        auto scope = tape.activate();
        const Tensor<T> loss = cross_entropy(model.forward_batch(batch), batch_labels);
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
        tape.backward(loss);
      }
      adam_step<T>(params, adam, options);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (!valid.empty()) rec.valid = evaluate(model, valid);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.epochs.push_back(std::move(rec));
    if (on_epoch && !on_epoch(report.epochs.back())) break;
  }
  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

#define KLCBL_INSTANTIATE_MODEL(T)                                                                       \
  template class KlcblModel<T>;                                                                          \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                              \
  template Prediction predict(const EmbeddedExample&, const KlcblModel<T>&);                             \
  template void adam_step(std::span<NamedTensor<T>>, AdamState<T>&, const AdamOptions&);                 \
  template double average_loss(const KlcblModel<T>&, const std::vector<EmbeddedExample>&);               \
  template MetricsReport evaluate(const KlcblModel<T>&, const std::vector<EmbeddedExample>&);            \
  template TrainReport fit(const std::vector<EmbeddedExample>&, const std::vector<EmbeddedExample>&,     \
                           KlcblModel<T>&, const TrainConfig&, const EpochCallback&);

KLCBL_INSTANTIATE_MODEL(float)
KLCBL_INSTANTIATE_MODEL(double)

#undef KLCBL_INSTANTIATE_MODEL

}  // namespace klcbl
