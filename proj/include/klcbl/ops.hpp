#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "klcbl/tensor.hpp"

namespace klcbl {

enum class OpKind { kAdd, kSub, kMul, kSigmoid, kTanh, kSilu, kRelu };

/// Parses "add", "sub", "mul", "sigmoid", "tanh", "silu", "relu".
OpKind parse_op_kind(std::string_view name);
std::string_view op_kind_name(OpKind kind);
bool is_binary(OpKind kind);

/// Pointwise operation. Binary kinds require equal shapes, except that a
/// rank-0 operand is applied to every element of the other.
template <typename T>
Tensor<T> elementwise(OpKind kind, const Tensor<T>& a, const std::optional<Tensor<T>>& b = std::nullopt);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
template <typename T>
Tensor<T> silu(const Tensor<T>& a);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// a * factor for a constant factor.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// [m x k] . [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// [m x k] . [n x k]^T -> [m x n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// [m x n] . [n] -> [m]
template <typename T>
Tensor<T> matvec(const Tensor<T>& a, const Tensor<T>& x);

/// y[i, j] + bias[j]; the explicit form of a row-wise bias.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& y, const Tensor<T>& bias);

/// Sum of all elements as a rank-0 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis = 0);

/// `length` consecutive entries starting at `start` along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);

/// Row i of a matrix as a vector.
template <typename T>
Tensor<T> row(const Tensor<T>& a, std::size_t i);

/// Same values under a new shape with an equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Sliding-window patches of a [T x C] sequence: row p holds
/// x[p*stride + w - padding, c] at column c*kernel + w (zero outside the input).
template <typename T>
Tensor<T> unfold1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// out[c] = max_t y[t, c]; the gradient flows to the first maximising row.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& y);

}  // namespace klcbl
