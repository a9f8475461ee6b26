#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "klcbl/tensor.hpp"

namespace klcbl {

struct GradCheckResult {
  /// max_i |analytic_i - numeric_i| / max(1, |analytic_i|)
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  /// Evaluations that landed within the kink radius of a non-differentiable
  /// point. Non-zero means the comparison is meaningless and the caller
  /// should perturb the input.
  std::size_t kink_hits = 0;

  bool at_kink() const { return kink_hits > 0; }
};

template <typename T>
constexpr double default_grad_check_eps() {
  return sizeof(T) >= sizeof(double) ? 1e-4 : 1e-2;
}

/// Compares the tape gradient of scalar f with respect to x against central
/// differences. x must be a leaf; f may close over other leaves (their
/// gradients accumulate as a side effect). x's own gradient is left as it was.
template <typename T>
GradCheckResult check_gradients(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                                double eps = default_grad_check_eps<T>(), double kink_radius = -1.0) {
  if (!(eps > 0.0)) throw Error("check_gradients: eps must be positive");
  if (!x.is_leaf()) throw Error("check_gradients: x must be a leaf tensor");
  if (kink_radius < 0.0) kink_radius = 10.0 * eps;

  const bool had_requires_grad = x.requires_grad();
  const std::vector<T> saved_grad(x.grad().begin(), x.grad().end());
  x.zero_grad();
  x.set_requires_grad(true);

  GradCheckResult result;
  KinkMonitor kinks(kink_radius);
  std::vector<T> analytic;
  {
    GradTape<T> tape;
    auto scope = tape.activate();
    const Tensor<T> y = f(x);
    if (y.size() != 1) throw ShapeError("check_gradients: f must return a scalar, got " + shape_to_string(y.shape()));
    tape.backward(y);
    analytic.assign(x.grad().begin(), x.grad().end());
    if (analytic.empty()) analytic.assign(x.size(), T(0));
  }

  auto evaluate = [&]() {
    typename GradTape<T>::Pause pause;
    const Tensor<T> y = f(x);
    const double v = static_cast<double>(y.item());
    if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite function value");
    return v;
  };

  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T original = values[i];
    values[i] = static_cast<T>(static_cast<double>(original) + eps);
    const double plus = evaluate();
    values[i] = static_cast<T>(static_cast<double>(original) - eps);
    const double minus = evaluate();
    values[i] = original;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  result.kink_hits = kinks.hits();

  x.set_requires_grad(had_requires_grad);
  x.zero_grad();
  if (!saved_grad.empty()) {
    auto& grad = x.node()->grad;
    grad = saved_grad;
  }
  return result;
}

/// check_gradients over several tensors; reports the worst one.
template <typename T>
GradCheckResult check_gradients_all(const std::function<Tensor<T>()>& f, const std::vector<Tensor<T>>& inputs,
                                    double eps = default_grad_check_eps<T>()) {
  GradCheckResult worst;
  for (const auto& input : inputs) {
    const auto r = check_gradients<T>([&](const Tensor<T>&) { return f(); }, input, eps);
    worst.kink_hits += r.kink_hits;
    if (r.max_relative_error >= worst.max_relative_error) {
      worst.max_relative_error = r.max_relative_error;
      worst.worst_index = r.worst_index;
    }
  }
  return worst;
}

}  // namespace klcbl
