#pragma once

#include <optional>
#include <string>

#include "klcbl/rng.hpp"
#include "klcbl/tensor.hpp"

namespace klcbl {

enum class Activation { kRelu, kNone };

struct ConvConfig {
  std::size_t in_dim = 768;
  std::size_t out_channels = 128;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool use_bias = true;
  Activation activation = Activation::kRelu;

  void validate() const;
  /// Output length for an input of `steps` positions.
  std::size_t output_steps(std::size_t steps) const;

  friend bool operator==(const ConvConfig&, const ConvConfig&) = default;
};

template <typename T>
struct ConvWeights {
  Tensor<T> weight;               // [out_channels x in_dim x kernel_size]
  std::optional<Tensor<T>> bias;  // [out_channels]

  /// Glorot-uniform weights in +-sqrt(6 / (in_dim + out_channels)), zero bias.
  static ConvWeights init(const ConvConfig& cfg, SplitMix64& rng);
};

/// y[p, k] = sum_{c, w} x[p*stride + w - padding, c] * W[k, c, w] (+ b[k]),
/// followed by the configured activation. For the default kernel of width 1
/// this is the same 768 -> 128 projection applied at every position.
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const ConvConfig& cfg, const ConvWeights<T>& weights);

/// Convolution followed by global max pooling over time: a fixed
/// out_channels-wide vector regardless of sequence length.
template <typename T>
class ConvChannel {
 public:
  ConvChannel(ConvConfig cfg, SplitMix64& rng);
  ConvChannel(ConvConfig cfg, ConvWeights<T> weights);

  Tensor<T> forward(const Tensor<T>& tokens) const;

  const ConvConfig& config() const { return cfg_; }
  ConvWeights<T>& weights() { return weights_; }
  const ConvWeights<T>& weights() const { return weights_; }

 private:
  ConvConfig cfg_;
  ConvWeights<T> weights_;
};

}  // namespace klcbl
