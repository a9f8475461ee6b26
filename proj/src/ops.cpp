#include "klcbl/ops.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace klcbl {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

OpKind parse_op_kind(std::string_view name) {
  if (name == "add") return OpKind::kAdd;
  if (name == "sub") return OpKind::kSub;
  if (name == "mul") return OpKind::kMul;
  if (name == "sigmoid") return OpKind::kSigmoid;
  if (name == "tanh") return OpKind::kTanh;
  if (name == "silu") return OpKind::kSilu;
  if (name == "relu") return OpKind::kRelu;
  throw Error("unknown elementwise op kind '" + std::string(name) + "'");
}

std::string_view op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSilu: return "silu";
    case OpKind::kRelu: return "relu";
  }
  throw Error("unknown elementwise op kind " + std::to_string(static_cast<int>(kind)));
}

bool is_binary(OpKind kind) { return kind == OpKind::kAdd || kind == OpKind::kSub || kind == OpKind::kMul; }

namespace {

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> binary(OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const bool a_scalar = a.is_scalar() && !b.is_scalar();
  const bool b_scalar = b.is_scalar() && !a.is_scalar();
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw ShapeError(std::string(op_kind_name(kind)) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto ad = a.data();
  const auto bd = b.data();
  auto av = [&](std::size_t i) { return a_scalar ? ad[0] : ad[i]; };
  auto bv = [&](std::size_t i) { return b_scalar ? bd[0] : bd[i]; };
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case OpKind::kAdd: out[i] = av(i) + bv(i); break;
      case OpKind::kSub: out[i] = av(i) - bv(i); break;
      case OpKind::kMul: out[i] = av(i) * bv(i); break;
      default: throw Error("not a binary op");
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>(op_kind_name(kind), shape, std::move(out), {&a, &b},
                                [kind, an, bn, a_scalar, b_scalar](std::span<const T> g) {
                                  const std::size_t n = g.size();
                                  if (auto ga = detail::grad_sink(an); !ga.empty()) {
                                    for (std::size_t i = 0; i < n; ++i) {
                                      T d = g[i];
                                      if (kind == OpKind::kMul) d *= b_scalar ? bn->data[0] : bn->data[i];
                                      ga[a_scalar ? 0 : i] += d;
                                    }
                                  }
                                  if (auto gb = detail::grad_sink(bn); !gb.empty()) {
                                    for (std::size_t i = 0; i < n; ++i) {
                                      T d = g[i];
                                      if (kind == OpKind::kSub) d = -d;
                                      if (kind == OpKind::kMul) d *= a_scalar ? an->data[0] : an->data[i];
                                      gb[b_scalar ? 0 : i] += d;
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> unary(OpKind kind, const Tensor<T>& a) {
  const auto ad = a.data();
  const std::size_t n = ad.size();
  std::vector<T> out(n);
  // Local derivative per element, kept for the backward rule.
  std::vector<T> local(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = ad[i];
    switch (kind) {
      case OpKind::kSigmoid: {
        const T s = stable_sigmoid(x);
        out[i] = s;
        local[i] = s * (T(1) - s);
        break;
      }
      case OpKind::kTanh: {
        const T t = std::tanh(x);
        out[i] = t;
        local[i] = T(1) - t * t;
        break;
      }
      case OpKind::kSilu: {
        const T s = stable_sigmoid(x);
        out[i] = x * s;
        local[i] = s + x * s * (T(1) - s);
        break;
      }
      case OpKind::kRelu:
        KinkMonitor::note(std::abs(static_cast<double>(x)));
        out[i] = x > T(0) ? x : T(0);
        local[i] = x > T(0) ? T(1) : T(0);
        break;
      default: throw Error("not a unary op");
    }
  }
  auto an = a.node();
  return detail::make_result<T>(op_kind_name(kind), a.shape(), std::move(out), {&a},
                                [an, local = std::move(local)](std::span<const T> g) {
                                  if (auto ga = detail::grad_sink(an); !ga.empty()) {
                                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * local[i];
                                  }
                                });
}

void require_rank(std::string_view op, const Shape& shape, std::size_t rank) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_to_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> elementwise(OpKind kind, const Tensor<T>& a, const std::optional<Tensor<T>>& b) {
  if (is_binary(kind)) {
    if (!b) throw Error(std::string(op_kind_name(kind)) + " needs two operands");
    return binary(kind, a, *b);
  }
  if (b) throw Error(std::string(op_kind_name(kind)) + " takes a single operand");
  return unary(kind, a);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(OpKind::kAdd, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(OpKind::kSub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(OpKind::kMul, a, b);
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(OpKind::kSigmoid, a);
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(OpKind::kTanh, a);
}
template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  return unary(OpKind::kSilu, a);
}
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(OpKind::kRelu, a);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  auto an = a.node();
  return detail::make_result<T>("scale", a.shape(), std::move(out), {&a}, [an, factor](std::span<const T> g) {
    if (auto ga = detail::grad_sink(an); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " . " +
                     shape_to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ad[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bd[p * n + j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](std::span<const T> g) {
    // a.grad += g . b^T
    if (auto ga = detail::grad_sink(an); !ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->data[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    // b.grad += a^T . g
    if (auto gb = detail::grad_sink(bn); !gb.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = an->data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul_nt", a.shape(), 2);
  require_rank("matmul_nt", b.shape(), 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimensions differ, " + shape_to_string(a.shape()) + " . " +
                     shape_to_string(b.shape()) + "^T");
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ad[i * k + p] * bd[j * k + p];
      out[i * n + j] = acc;
    }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<T>("matmul_nt", {m, n}, std::move(out), {&a, &b},
                                [an, bn, m, k, n](std::span<const T> g) {
                                  // a.grad += g . b
                                  if (auto ga = detail::grad_sink(an); !ga.empty()) {
                                    for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) {
                                        const T gij = g[i * n + j];
                                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bn->data[j * k + p];
                                      }
                                  }
                                  // b.grad += g^T . a
                                  if (auto gb = detail::grad_sink(bn); !gb.empty()) {
                                    for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) {
                                        const T gij = g[i * n + j];
                                        for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * an->data[i * k + p];
                                      }
                                  }
                                });
}

template <typename T>
Tensor<T> matvec(const Tensor<T>& a, const Tensor<T>& x) {
  require_rank("matvec", a.shape(), 2);
  require_rank("matvec", x.shape(), 1);
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (x.dim(0) != n) {
    throw ShapeError("matvec: " + shape_to_string(a.shape()) + " . " + shape_to_string(x.shape()));
  }
  const auto ad = a.data();
  const auto xd = x.data();
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += ad[i * n + j] * xd[j];
    out[i] = acc;
  }
  auto an = a.node();
  auto xn = x.node();
  return detail::make_result<T>("matvec", {m}, std::move(out), {&a, &x}, [an, xn, m, n](std::span<const T> g) {
    if (auto ga = detail::grad_sink(an); !ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i] * xn->data[j];
    }
    if (auto gx = detail::grad_sink(xn); !gx.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[j] += g[i] * an->data[i * n + j];
    }
  });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& y, const Tensor<T>& bias) {
  require_rank("add_row_bias", y.shape(), 2);
  require_rank("add_row_bias", bias.shape(), 1);
  const std::size_t m = y.dim(0), n = y.dim(1);
  if (bias.dim(0) != n) {
    throw ShapeError("add_row_bias: " + shape_to_string(y.shape()) + " + " + shape_to_string(bias.shape()));
  }
  std::vector<T> out(y.data().begin(), y.data().end());
  const auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  auto yn = y.node();
  auto bn = bias.node();
  return detail::make_result<T>("add_row_bias", y.shape(), std::move(out), {&y, &bias},
                                [yn, bn, m, n](std::span<const T> g) {
                                  if (auto gy = detail::grad_sink(yn); !gy.empty()) {
                                    for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i];
                                  }
                                  if (auto gb = detail::grad_sink(bn); !gb.empty()) {
                                    for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  auto an = a.node();
  return detail::make_result<T>("sum", {}, {acc}, {&a}, [an](std::span<const T> g) {
    if (auto ga = detail::grad_sink(an); !ga.empty()) {
      for (T& v : ga) v += g[0];
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_to_string(first));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    bool compatible = p.rank() == first.size();
    for (std::size_t d = 0; compatible && d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) compatible = false;
    }
    if (!compatible) {
      throw ShapeError("concat: incompatible parts " + shape_to_string(first) + " and " + shape_to_string(p.shape()) +
                       " along axis " + std::to_string(axis));
    }
    shape[axis] += p.dim(axis);
  }
  // Treat every tensor as [outer x (axis * inner)] blocks.
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = shape[axis] * inner;
  std::vector<T> out(shape_numel(shape));
  std::vector<detail::NodePtr<T>> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.dim(axis) * inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + o * width, width, out.begin() + o * out_row + offset);
    }
    nodes.push_back(p.node());
    offsets.push_back(offset);
    offset += width;
  }
  return detail::make_result<T>("concat", shape, std::move(out), parts,
                                [nodes, offsets, outer, out_row](std::span<const T> g) {
                                  for (std::size_t k = 0; k < nodes.size(); ++k) {
                                    auto gp = detail::grad_sink(nodes[k]);
                                    if (gp.empty()) continue;
                                    const std::size_t width = gp.size() / outer;
                                    for (std::size_t o = 0; o < outer; ++o)
                                      for (std::size_t w = 0; w < width; ++w)
                                        gp[o * width + w] += g[o * out_row + offsets[k] + w];
                                  }
                                });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank()) {
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_to_string(a.shape()));
  }
  if (length == 0 || start + length > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside " + shape_to_string(a.shape()) + " on axis " + std::to_string(axis));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t in_row = a.dim(axis) * inner;
  const std::size_t out_row = length * inner;
  const std::size_t begin = start * inner;
  std::vector<T> out(outer * out_row);
  const auto ad = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ad.begin() + o * in_row + begin, out_row, out.begin() + o * out_row);
  }
  auto an = a.node();
  return detail::make_result<T>("slice", shape, std::move(out), {&a},
                                [an, outer, in_row, out_row, begin](std::span<const T> g) {
                                  if (auto ga = detail::grad_sink(an); !ga.empty()) {
                                    for (std::size_t o = 0; o < outer; ++o)
                                      for (std::size_t w = 0; w < out_row; ++w)
                                        ga[o * in_row + begin + w] += g[o * out_row + w];
                                  }
                                });
}

template <typename T>
Tensor<T> row(const Tensor<T>& a, std::size_t i) {
  require_rank("row", a.shape(), 2);
  return reshape(slice(a, 0, i, 1), {a.dim(1)});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return detail::make_result<T>("reshape", std::move(shape), std::move(out), {&a}, [an](std::span<const T> g) {
    if (auto ga = detail::grad_sink(an); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> unfold1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_rank("unfold1d", x.shape(), 2);
  if (kernel == 0 || stride == 0) throw ShapeError("unfold1d: kernel and stride must be positive");
  const std::size_t steps = x.dim(0), channels = x.dim(1);
  if (steps + 2 * padding < kernel) {
    throw ShapeError("unfold1d: sequence of length " + std::to_string(steps) + " is shorter than kernel " +
                     std::to_string(kernel) + " with padding " + std::to_string(padding));
  }
  const std::size_t out_steps = (steps + 2 * padding - kernel) / stride + 1;
  const std::size_t width = channels * kernel;
  // Source index per patch entry, or npos for padding.
  std::vector<std::size_t> source(out_steps * width, static_cast<std::size_t>(-1));
  for (std::size_t p = 0; p < out_steps; ++p)
    for (std::size_t w = 0; w < kernel; ++w) {
      const std::size_t pos = p * stride + w;
      if (pos < padding || pos - padding >= steps) continue;
      const std::size_t t = pos - padding;
      for (std::size_t c = 0; c < channels; ++c) source[p * width + c * kernel + w] = t * channels + c;
    }
  const auto xd = x.data();
  std::vector<T> out(source.size(), T(0));
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source[i] != static_cast<std::size_t>(-1)) out[i] = xd[source[i]];
  auto xn = x.node();
  return detail::make_result<T>("unfold1d", {out_steps, width}, std::move(out), {&x},
                                [xn, source = std::move(source)](std::span<const T> g) {
                                  if (auto gx = detail::grad_sink(xn); !gx.empty()) {
                                    for (std::size_t i = 0; i < source.size(); ++i)
                                      if (source[i] != static_cast<std::size_t>(-1)) gx[source[i]] += g[i];
                                  }
                                });
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& y) {
  require_rank("global_max_pool", y.shape(), 2);
  const std::size_t steps = y.dim(0), channels = y.dim(1);
  const auto yd = y.data();
  std::vector<T> out(channels);
  std::vector<std::size_t> argmax(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < steps; ++t)
      if (yd[t * channels + c] > yd[best * channels + c]) best = t;
    // Distance to the runner-up decides whether the max is a kink.
    for (std::size_t t = 0; t < steps; ++t) {
      if (t != best) KinkMonitor::note(static_cast<double>(yd[best * channels + c] - yd[t * channels + c]));
    }
    argmax[c] = best;
    out[c] = yd[best * channels + c];
  }
  auto yn = y.node();
  return detail::make_result<T>("global_max_pool", {channels}, std::move(out), {&y},
                                [yn, channels, argmax = std::move(argmax)](std::span<const T> g) {
                                  if (auto gy = detail::grad_sink(yn); !gy.empty()) {
                                    for (std::size_t c = 0; c < channels; ++c) gy[argmax[c] * channels + c] += g[c];
                                  }
                                });
}

#define KLCBL_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> elementwise(OpKind, const Tensor<T>&, const std::optional<Tensor<T>>&);       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                                       \
  template Tensor<T> silu(const Tensor<T>&);                                                       \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> matvec(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                           \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);               \
  template Tensor<T> row(const Tensor<T>&, std::size_t);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> unfold1d(const Tensor<T>&, std::size_t, std::size_t, std::size_t);            \
  template Tensor<T> global_max_pool(const Tensor<T>&);

KLCBL_INSTANTIATE_OPS(float)
KLCBL_INSTANTIATE_OPS(double)

#undef KLCBL_INSTANTIATE_OPS

}  // namespace klcbl
