#pragma once

// Longer training scenarios shared by the unit tests and the acceptance run.

#include <cmath>
#include <numbers>
#include <vector>

#include "klcbl/data.hpp"
#include "klcbl/kan.hpp"
#include "klcbl/model.hpp"
#include "klcbl/ops.hpp"
#include "klcbl/synthetic.hpp"

namespace klcbl::testing {

struct SineFit {
  double rmse = 0.0;
  std::size_t steps = 0;
};

/// Fits a single 1 -> 1 KAN layer to sin(pi x) on `points` evenly spaced
/// points of [-1, 1] by full-batch Adam on the mean squared error. Stops as
/// soon as the RMSE drops below `target`.
inline SineFit fit_sine(const SplineGrid& grid, std::size_t max_steps, double lr, double target,
                        std::uint64_t seed = 24, std::size_t points = 256) {
  SplitMix64 rng(seed);
  KanLayer<double> layer(1, 1, grid, rng);
  std::vector<double> xs(points), ys(points);
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1);
    ys[i] = std::sin(std::numbers::pi * xs[i]);
  }
  const Tensor<double> x({points, 1}, xs);
  const Tensor<double> y({points, 1}, ys);
  std::vector<NamedTensor<double>> params{{"omega", layer.omega()}, {"coeffs", layer.coeffs()}};
  AdamState<double> state;
  AdamOptions opts;
  opts.learning_rate = lr;

  auto rmse = [&] {
    typename GradTape<double>::Pause pause;
    const auto d = sub(kan_layer_forward(x, layer), y);
    return std::sqrt(sum(mul(d, d)).item() / static_cast<double>(points));
  };

  SineFit out;
  out.rmse = rmse();
  while (out.steps < max_steps && !(out.rmse < target)) {
    for (auto& p : params) p.tensor.zero_grad();
    GradTape<double> tape;
    auto scope = tape.activate();
    const auto d = sub(kan_layer_forward(x, layer), y);
    tape.backward(scale(sum(mul(d, d)), 1.0 / static_cast<double>(points)));
    adam_step<double>(params, state, opts);
    ++out.steps;
    out.rmse = rmse();
  }
  return out;
}

struct Overfit {
  std::size_t epochs = 0;
  double train_accuracy = 0.0;
  double train_loss = 0.0;
};

/// Trains the miniature model (hash embeddings of width 32, channels 16 + 16,
/// KAN head 64 -> 32 -> 3) on `n` synthetic examples one epoch at a time until
/// every training example is classified correctly or `max_epochs` is reached.
inline Overfit overfit_miniature(std::size_t n = 96, std::size_t max_epochs = 200, double lr = 1e-3,
                                 std::uint64_t seed = 24) {
  const auto data = embed_dataset(make_synthetic_dataset(n, seed), 32, kDefaultMaxTokens);
  KlcblModel<double> model(ModelConfig::miniature(32, 16, 16, 32), seed);
  TrainConfig tc;
  tc.learning_rate = lr;
  tc.epochs = max_epochs;
  tc.seed = seed;
  Overfit out;
  fit(data, {}, model, tc, [&](const EpochRecord& rec) {
    const auto report = evaluate(model, data);
    out.epochs = rec.epoch;
    out.train_accuracy = report.accuracy;
    out.train_loss = report.average_loss;
    return report.accuracy < 1.0;
  });
  return out;
}

}  // namespace klcbl::testing
