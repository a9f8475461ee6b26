#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding shape, data and (optionally)
// an accumulated gradient. Operations executed while a GradTape is active on
// the calling thread are recorded on that tape whenever at least one input
// requires a gradient; otherwise they run in inference mode and record
// nothing. Tapes are thread-local, so independent samples may be evaluated
// concurrently on disjoint tapes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "klcbl/error.hpp"

namespace klcbl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

template <typename T>
class GradTape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Set only for nodes produced by a recorded operation.
  const GradTape<T>* tape = nullptr;
  std::size_t tape_index = 0;
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

/// Gradient buffer of an input node, allocated on first use. Empty when the
/// node does not take part in differentiation.
template <typename T>
std::span<T> grad_sink(const NodePtr<T>& node) {
  if (!node->requires_grad) return {};
  if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), T(0));
  return node->grad;
}

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("shape " + shape_to_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                       " values, got " + std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  /// Rank-0 tensor.
  static Tensor scalar(T value, bool requires_grad = false) { return Tensor({}, {value}, requires_grad); }

  static Tensor vector(std::vector<T> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
  }

  static Tensor from_node(detail::NodePtr<T> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  bool is_scalar() const { return node_->shape.empty(); }

  std::span<const T> data() const { return node_->data; }
  /// Direct write access. Writing into a tensor that an active tape has
  /// already consumed invalidates that tape's gradients.
  std::span<T> mutable_data() { return node_->data; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
    return node_->data[0];
  }
  T at(std::size_t i) const { return node_->data.at(i); }
  T at(std::size_t i, std::size_t j) const {
    if (rank() != 2) throw ShapeError("at(i, j) on tensor of shape " + shape_to_string(shape()));
    return node_->data.at(i * node_->shape[1] + j);
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value) {
    node_->requires_grad = value;
    return *this;
  }
  bool is_leaf() const { return node_->tape == nullptr; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Accumulated gradient; empty until a backward pass reaches this tensor.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values, disconnected from any tape.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return Tensor<U>(shape(), std::move(out), false);
  }

  const detail::NodePtr<T>& node() const { return node_; }

 private:
  detail::NodePtr<T> node_;
};

/// Ordered record of differentiable operations executed on one thread.
template <typename T>
class GradTape {
 public:
  /// Receives the gradient of the operation's output and accumulates into its
  /// inputs' gradient buffers.
  using BackwardFn = std::function<void(std::span<const T> output_grad)>;

  struct Entry {
    std::string_view op;
    detail::NodePtr<T> output;
    BackwardFn backward;
  };

  /// Makes a tape the recording target of the current thread for its lifetime.
  class Scope {
   public:
    explicit Scope(GradTape& tape) : previous_(active_) { active_ = &tape; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* previous_;
  };

  /// Suspends recording on the current thread.
  class Pause {
   public:
    Pause() : previous_(active_) { active_ = nullptr; }
    ~Pause() { active_ = previous_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    GradTape* previous_;
  };

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  [[nodiscard]] Scope activate() { return Scope(*this); }

  static GradTape* active() { return active_; }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  void record(std::string_view op, const detail::NodePtr<T>& output, BackwardFn backward) {
    output->requires_grad = true;
    output->tape = this;
    output->tape_index = entries_.size();
    entries_.push_back({op, output, std::move(backward)});
  }

  /// Propagates d(loss)/d(.) to every tensor that requires a gradient. Leaf
  /// gradients accumulate across calls; intermediate gradients are recomputed.
  /// Returns the number of operations visited.
  std::size_t backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
      throw ShapeError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    const auto& node = loss.node();
    if (node->tape != this || node->tape_index >= entries_.size() || entries_[node->tape_index].output != node) {
      throw Error("backward: loss was not produced by an operation recorded on this tape");
    }
    const std::size_t last = node->tape_index;
    for (std::size_t k = 0; k <= last; ++k) {
      auto& out = *entries_[k].output;
      out.grad.assign(out.data.size(), T(0));
    }
    node->grad[0] = T(1);
    std::size_t visited = 0;
    for (std::size_t k = last + 1; k-- > 0;) {
      entries_[k].backward(entries_[k].output->grad);
      ++visited;
    }
    return visited;
  }

  void clear() { entries_.clear(); }

 private:
  static inline thread_local GradTape* active_ = nullptr;
  std::vector<Entry> entries_;
};

/// Counts evaluations of non-differentiable operations (ReLU at zero, max-pool
/// ties) that occur within `radius` of their kink on the current thread.
class KinkMonitor {
 public:
  explicit KinkMonitor(double radius) : previous_(current_), radius_(radius) { current_ = this; }
  ~KinkMonitor() { current_ = previous_; }
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::size_t hits() const { return hits_; }

  /// Called by operations with the distance between the input and the kink.
  static void note(double distance) {
    if (current_ != nullptr && distance <= current_->radius_) ++current_->hits_;
  }

 private:
  static inline thread_local KinkMonitor* current_ = nullptr;
  KinkMonitor* previous_;
  double radius_;
  std::size_t hits_ = 0;
};

namespace detail {

template <typename T>
void ensure_finite(std::string_view op, std::span<const T> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + " produced a non-finite value at index " + std::to_string(i));
    }
  }
}

/// Builds an operation result and records it when any input needs a gradient
/// and a tape is active.
template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs, typename GradTape<T>::BackwardFn backward) {
  ensure_finite<T>(op, data);
  Tensor<T> out(std::move(shape), std::move(data));
  GradTape<T>* tape = GradTape<T>::active();
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
  if (needs) tape->record(op, out.node(), std::move(backward));
  return out;
}

template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      typename GradTape<T>::BackwardFn backward) {
  ensure_finite<T>(op, data);
  Tensor<T> out(std::move(shape), std::move(data));
  GradTape<T>* tape = GradTape<T>::active();
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (needs) tape->record(op, out.node(), std::move(backward));
  return out;
}

}  // namespace detail

}  // namespace klcbl
