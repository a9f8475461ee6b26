#pragma once

// Small helpers shared by the unit tests: seeded random tensors and examples.

#include <cmath>
#include <string>
#include <vector>

#include "klcbl/data.hpp"
#include "klcbl/rng.hpp"
#include "klcbl/tensor.hpp"

namespace klcbl::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

/// Random embedded example with `steps` token rows of width `dim`.
inline EmbeddedExample random_example(std::size_t steps, std::size_t dim, SplitMix64& rng, int label = 0,
                                      std::string id = "e") {
  EmbeddedExample ex;
  ex.id = std::move(id);
  ex.steps = steps;
  ex.dim = dim;
  ex.label = label;
  ex.tokens.resize(steps * dim);
  for (auto& v : ex.tokens) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  ex.pooled.resize(dim);
  for (auto& v : ex.pooled) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return ex;
}

template <typename T>
std::vector<double> to_doubles(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace klcbl::testing
