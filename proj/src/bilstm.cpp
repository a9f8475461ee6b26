#include "klcbl/bilstm.hpp"

#include <cmath>

#include "klcbl/ops.hpp"

namespace klcbl {

void LstmConfig::validate() const {
  if (in_dim == 0) throw ConfigError("lstm: in_dim must be positive");
  if (hidden_per_direction == 0) throw ConfigError("lstm: hidden_per_direction must be positive");
}

template <typename T>
LstmWeights<T> LstmWeights<T>::init(std::size_t in_dim, std::size_t hidden, SplitMix64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(hidden));
  auto uniform = [&](std::size_t n) {
    std::vector<T> v(n);
    for (T& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return v;
  };
  LstmWeights w;
  w.input = Tensor<T>({4 * hidden, in_dim}, uniform(4 * hidden * in_dim), true);
  w.recurrent = Tensor<T>({4 * hidden, hidden}, uniform(4 * hidden * hidden), true);
  std::vector<T> b(4 * hidden, T(0));
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(hidden), b.begin() + static_cast<std::ptrdiff_t>(2 * hidden), T(1));
  w.bias = Tensor<T>({4 * hidden}, std::move(b), true);
  return w;
}

template <typename T>
LstmWeights<T> LstmWeights<T>::zeros(std::size_t in_dim, std::size_t hidden) {
  LstmWeights w;
  w.input = Tensor<T>::zeros({4 * hidden, in_dim}, true);
  w.recurrent = Tensor<T>::zeros({4 * hidden, hidden}, true);
  w.bias = Tensor<T>::zeros({4 * hidden}, true);
  return w;
}

namespace {

template <typename T>
void check_weights(const LstmWeights<T>& w) {
  const std::size_t h = w.recurrent.rank() == 2 ? w.recurrent.dim(1) : 0;
  if (w.recurrent.shape() != Shape{4 * h, h} || w.input.rank() != 2 || w.input.dim(0) != 4 * h ||
      w.bias.shape() != Shape{4 * h}) {
    throw ShapeError("lstm: inconsistent weights " + shape_to_string(w.input.shape()) + ", " +
                     shape_to_string(w.recurrent.shape()) + ", " + shape_to_string(w.bias.shape()));
  }
}

// Gate math on z = W x + U h_prev + b.
template <typename T>
LstmState<T> cell_from_preactivation(const Tensor<T>& z, const LstmState<T>& prev, std::size_t hidden) {
  const Tensor<T> i = sigmoid(slice(z, 0, 0, hidden));
  const Tensor<T> f = sigmoid(slice(z, 0, hidden, hidden));
  const Tensor<T> g = tanh(slice(z, 0, 2 * hidden, hidden));
  const Tensor<T> o = sigmoid(slice(z, 0, 3 * hidden, hidden));
  Tensor<T> c = add(mul(f, prev.c), mul(i, g));
  Tensor<T> h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

}  // namespace

template <typename T>
LstmState<T> lstm_cell_step(const Tensor<T>& x_t, const LstmState<T>& prev, const LstmWeights<T>& w) {
  check_weights(w);
  const std::size_t hidden = w.hidden();
  if (x_t.shape() != Shape{w.input.dim(1)}) {
    throw ShapeError("lstm step: input " + shape_to_string(x_t.shape()) + ", expected [" +
                     std::to_string(w.input.dim(1)) + "]");
  }
  if (prev.h.shape() != Shape{hidden} || prev.c.shape() != Shape{hidden}) {
    throw ShapeError("lstm step: state " + shape_to_string(prev.h.shape()) + "/" + shape_to_string(prev.c.shape()) +
                     ", expected [" + std::to_string(hidden) + "]");
  }
  const Tensor<T> z = add(add(matvec(w.input, x_t), matvec(w.recurrent, prev.h)), w.bias);
  return cell_from_preactivation(z, prev, hidden);
}

template <typename T>
LstmState<T> lstm_run(const Tensor<T>& x, const LstmWeights<T>& w, bool reverse) {
  check_weights(w);
  if (x.rank() != 2 || x.dim(1) != w.input.dim(1)) {
    throw ShapeError("lstm: input " + shape_to_string(x.shape()) + " does not match in_dim " +
                     std::to_string(w.input.dim(1)));
  }
  const std::size_t hidden = w.hidden();
  const std::size_t steps = x.dim(0);
  // Input projections for all steps at once: [T x 4H].
  const Tensor<T> projected = matmul_nt(x, w.input);
  LstmState<T> state{Tensor<T>::zeros({hidden}), Tensor<T>::zeros({hidden})};
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const Tensor<T> z = add(add(row(projected, t), matvec(w.recurrent, state.h)), w.bias);
    state = cell_from_preactivation(z, state, hidden);
  }
  return state;
}

template <typename T>
Tensor<T> bilstm_forward(const Tensor<T>& x, const LstmWeights<T>& forward, const LstmWeights<T>& backward) {
  if (x.rank() != 2) throw ShapeError("bilstm: input must be [T x in_dim], got " + shape_to_string(x.shape()));
  const LstmState<T> fwd = lstm_run(x, forward, false);
  const LstmState<T> bwd = lstm_run(x, backward, true);
  return concat<T>({fwd.h, bwd.h});
}

template <typename T>
BiLstmChannel<T>::BiLstmChannel(LstmConfig cfg, SplitMix64& rng) : cfg_(cfg) {
  cfg_.validate();
  forward_ = LstmWeights<T>::init(cfg_.in_dim, cfg_.hidden_per_direction, rng);
  if (cfg_.bidirectional) backward_ = LstmWeights<T>::init(cfg_.in_dim, cfg_.hidden_per_direction, rng);
}

template <typename T>
BiLstmChannel<T>::BiLstmChannel(LstmConfig cfg, LstmWeights<T> forward, LstmWeights<T> backward)
    : cfg_(cfg), forward_(std::move(forward)), backward_(std::move(backward)) {
  cfg_.validate();
}

template <typename T>
Tensor<T> BiLstmChannel<T>::forward(const Tensor<T>& tokens) const {
  if (cfg_.bidirectional) return bilstm_forward(tokens, forward_, backward_);
  return lstm_run(tokens, forward_, false).h;
}

#define KLCBL_INSTANTIATE_LSTM(T)                                                                         \
  template struct LstmWeights<T>;                                                                         \
  template LstmState<T> lstm_cell_step(const Tensor<T>&, const LstmState<T>&, const LstmWeights<T>&);     \
  template LstmState<T> lstm_run(const Tensor<T>&, const LstmWeights<T>&, bool);                          \
  template Tensor<T> bilstm_forward(const Tensor<T>&, const LstmWeights<T>&, const LstmWeights<T>&);      \
  template class BiLstmChannel<T>;

KLCBL_INSTANTIATE_LSTM(float)
KLCBL_INSTANTIATE_LSTM(double)

#undef KLCBL_INSTANTIATE_LSTM

}  // namespace klcbl
