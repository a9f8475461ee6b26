#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "klcbl/bilstm.hpp"
#include "klcbl/cnn.hpp"
#include "klcbl/data.hpp"
#include "klcbl/kan.hpp"
#include "klcbl/metrics.hpp"
#include "klcbl/tensor.hpp"

namespace klcbl {

/// One slice of the fused vector.
struct FusionSlot {
  std::string channel;  // "lert", "cnn" or "bilstm"
  std::size_t width = 0;

  friend bool operator==(const FusionSlot&, const FusionSlot&) = default;
};

struct ModelConfig {
  std::size_t embedding_dim = 768;
  bool use_cnn = true;
  bool use_bilstm = true;
  bool use_lert_passthrough = true;
  ConvConfig cnn;
  LstmConfig lstm;
  HeadConfig head;

  /// Enabled channels in the fixed order lert, cnn, bilstm.
  std::vector<FusionSlot> fusion_layout() const;
  std::size_t fusion_dim() const;

  /// At least one channel, channel input widths equal embedding_dim, and
  /// head.in_dim equal to the fusion width.
  void validate() const;

  /// Copy with head.in_dim set to the fusion width.
  ModelConfig with_matching_head() const;

  /// Small dimensions for tests and desk-scale runs: embedding `embedding`,
  /// CNN `conv` channels, BiLSTM `lstm_total` wide, KAN hidden `hidden`.
  static ModelConfig miniature(std::size_t embedding, std::size_t conv, std::size_t lstm_total, std::size_t hidden);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t epochs = 3;
  double learning_rate = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 24;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Parallel embedding channels, fusion by concatenation, classifier head.
template <typename T>
class KlcblModel {
 public:
  /// Each component draws its initial weights from its own stream derived
  /// from `seed`, so disabling a channel leaves the others' weights unchanged.
  KlcblModel(ModelConfig cfg, std::uint64_t seed);

  /// concat(pooled, cnn(tokens), bilstm(tokens)) over the enabled channels.
  Tensor<T> fuse(const EmbeddedExample& ex) const;
  /// Logits [out_dim].
  Tensor<T> forward(const EmbeddedExample& ex) const;
  /// Logits [B x out_dim]; row b depends on batch[b] only.
  Tensor<T> forward_batch(std::span<const EmbeddedExample* const> batch) const;

  /// Every learnable tensor with a stable dotted name, in a fixed order.
  std::vector<NamedTensor<T>> parameters() const;
  std::size_t param_count() const;
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }
  std::optional<ConvChannel<T>>& cnn() { return cnn_; }
  std::optional<BiLstmChannel<T>>& bilstm() { return bilstm_; }
  ClassifierHead<T>& head() { return head_; }
  const ClassifierHead<T>& head() const { return head_; }

 private:
  ModelConfig cfg_;
  std::optional<ConvChannel<T>> cnn_;
  std::optional<BiLstmChannel<T>> bilstm_;
  ClassifierHead<T> head_;
};

template <typename T>
Tensor<T> klcbl_forward(const EmbeddedExample& ex, const KlcblModel<T>& model) {
  return model.forward(ex);
}

/// Mean categorical cross-entropy of softmax(logits) rows against labels,
/// with max subtraction. Differentiable in the logits.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Numerically stable softmax of one row.
std::vector<double> softmax(std::span<const double> logits);

struct Prediction {
  int label = 0;
  std::array<double, kNumClasses> probs{};
};

/// argmax of softmax(logits), ties to the lowest index.
Prediction predict_from_logits(std::span<const double> logits);

template <typename T>
Prediction predict(const EmbeddedExample& ex, const KlcblModel<T>& model);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamOptions from(const TrainConfig& cfg) {
    return {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  }
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Parameters without a gradient are left untouched. A non-finite
/// gradient aborts before anything is modified.
template <typename T>
void adam_step(std::span<NamedTensor<T>> params, AdamState<T>& state, const AdamOptions& options);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<MetricsReport> valid;
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<MetricsReport> test;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
};

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Mini-batch training: a seeded reshuffle per epoch, batches of batch_size
/// (the last one may be smaller), cross-entropy, backward, Adam. Validation
/// metrics after every epoch when `valid` is non-empty.
template <typename T>
TrainReport fit(const std::vector<EmbeddedExample>& train, const std::vector<EmbeddedExample>& valid,
                KlcblModel<T>& model, const TrainConfig& tconf, const EpochCallback& on_epoch = {});

/// Mean cross-entropy over the dataset, without recording gradients.
template <typename T>
double average_loss(const KlcblModel<T>& model, const std::vector<EmbeddedExample>& dataset);

template <typename T>
MetricsReport evaluate(const KlcblModel<T>& model, const std::vector<EmbeddedExample>& dataset);

}  // namespace klcbl
