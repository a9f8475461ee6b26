#pragma once

#include <utility>

#include "klcbl/rng.hpp"
#include "klcbl/tensor.hpp"

namespace klcbl {

struct LstmConfig {
  std::size_t in_dim = 768;
  std::size_t hidden_per_direction = 64;
  bool bidirectional = true;

  void validate() const;
  std::size_t output_dim() const { return (bidirectional ? 2 : 1) * hidden_per_direction; }

  friend bool operator==(const LstmConfig&, const LstmConfig&) = default;
};

/// One direction's parameters. Gates are stacked in the order input, forget,
/// candidate, output: rows [0,H) are the input gate, [H,2H) forget, etc.
template <typename T>
struct LstmWeights {
  Tensor<T> input;      // [4H x in_dim]
  Tensor<T> recurrent;  // [4H x H]
  Tensor<T> bias;       // [4H]

  std::size_t hidden() const { return recurrent.dim(1); }

  /// Uniform +-sqrt(1/H) weights, forget-gate bias 1, other biases 0.
  static LstmWeights init(std::size_t in_dim, std::size_t hidden, SplitMix64& rng);
  static LstmWeights zeros(std::size_t in_dim, std::size_t hidden);
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// i, f, o = sigmoid gates, g = tanh candidate,
/// c_t = f * c_prev + i * g, h_t = o * tanh(c_t).
template <typename T>
LstmState<T> lstm_cell_step(const Tensor<T>& x_t, const LstmState<T>& prev, const LstmWeights<T>& w);

/// Runs one direction over every row of x (in reverse when `reverse`) from a
/// zero state and returns the final state.
template <typename T>
LstmState<T> lstm_run(const Tensor<T>& x, const LstmWeights<T>& w, bool reverse);

/// concat(h_forward after t = T, h_backward after t = 1).
template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& x, const LstmWeights<T>& forward, const LstmWeights<T>& backward);

template <typename T>
class BiLstmChannel {
 public:
  BiLstmChannel(LstmConfig cfg, SplitMix64& rng);
  BiLstmChannel(LstmConfig cfg, LstmWeights<T> forward, LstmWeights<T> backward);

  Tensor<T> forward(const Tensor<T>& tokens) const;

  const LstmConfig& config() const { return cfg_; }
  LstmWeights<T>& forward_weights() { return forward_; }
  LstmWeights<T>& backward_weights() { return backward_; }
  const LstmWeights<T>& forward_weights() const { return forward_; }
  const LstmWeights<T>& backward_weights() const { return backward_; }

 private:
  LstmConfig cfg_;
  LstmWeights<T> forward_;
  LstmWeights<T> backward_;
};

}  // namespace klcbl
