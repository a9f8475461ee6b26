#include "klcbl/cnn.hpp"

#include <cmath>

#include "klcbl/ops.hpp"

namespace klcbl {

void ConvConfig::validate() const {
  if (in_dim == 0 || out_channels == 0) throw ConfigError("conv: in_dim and out_channels must be positive");
  if (kernel_size == 0) throw ConfigError("conv: kernel_size must be at least 1");
  if (stride == 0) throw ConfigError("conv: stride must be at least 1");
}

std::size_t ConvConfig::output_steps(std::size_t steps) const {
  if (steps + 2 * padding < kernel_size) {
    throw ShapeError("conv: sequence length " + std::to_string(steps) + " is too short for kernel_size " +
                     std::to_string(kernel_size) + " and padding " + std::to_string(padding));
  }
  return (steps + 2 * padding - kernel_size) / stride + 1;
}

template <typename T>
ConvWeights<T> ConvWeights<T>::init(const ConvConfig& cfg, SplitMix64& rng) {
  cfg.validate();
  const double bound = std::sqrt(6.0 / static_cast<double>(cfg.in_dim + cfg.out_channels));
  std::vector<T> w(cfg.out_channels * cfg.in_dim * cfg.kernel_size);
  for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  ConvWeights out;
  out.weight = Tensor<T>({cfg.out_channels, cfg.in_dim, cfg.kernel_size}, std::move(w), true);
  if (cfg.use_bias) out.bias = Tensor<T>::zeros({cfg.out_channels}, true);
  return out;
}

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const ConvConfig& cfg, const ConvWeights<T>& weights) {
  cfg.validate();
  if (x.rank() != 2 || x.dim(1) != cfg.in_dim) {
    throw ShapeError("conv1d: input " + shape_to_string(x.shape()) + " does not match in_dim " +
                     std::to_string(cfg.in_dim));
  }
  const Shape expected_w{cfg.out_channels, cfg.in_dim, cfg.kernel_size};
  if (weights.weight.shape() != expected_w) {
    throw ShapeError("conv1d: weight " + shape_to_string(weights.weight.shape()) + ", expected " +
                     shape_to_string(expected_w));
  }
  cfg.output_steps(x.dim(0));

  const bool pointwise = cfg.kernel_size == 1 && cfg.stride == 1 && cfg.padding == 0;
  const Tensor<T> patches = pointwise ? x : unfold1d(x, cfg.kernel_size, cfg.stride, cfg.padding);
  const Tensor<T> kernel = reshape(weights.weight, {cfg.out_channels, cfg.in_dim * cfg.kernel_size});
  Tensor<T> y = matmul_nt(patches, kernel);
  if (cfg.use_bias) {
    if (!weights.bias) throw ConfigError("conv1d: use_bias is set but no bias tensor is present");
    y = add_row_bias(y, *weights.bias);
  }
  if (cfg.activation == Activation::kRelu) y = relu(y);
  return y;
}

template <typename T>
ConvChannel<T>::ConvChannel(ConvConfig cfg, SplitMix64& rng) : cfg_(cfg), weights_(ConvWeights<T>::init(cfg, rng)) {}

template <typename T>
ConvChannel<T>::ConvChannel(ConvConfig cfg, ConvWeights<T> weights) : cfg_(cfg), weights_(std::move(weights)) {
  cfg_.validate();
}

template <typename T>
Tensor<T> ConvChannel<T>::forward(const Tensor<T>& tokens) const {
  return global_max_pool(conv1d_forward(tokens, cfg_, weights_));
}

template struct ConvWeights<float>;
template struct ConvWeights<double>;
template Tensor<float> conv1d_forward(const Tensor<float>&, const ConvConfig&, const ConvWeights<float>&);
template Tensor<double> conv1d_forward(const Tensor<double>&, const ConvConfig&, const ConvWeights<double>&);
template class ConvChannel<float>;
template class ConvChannel<double>;

}  // namespace klcbl
