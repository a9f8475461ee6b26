#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "klcbl/rng.hpp"
#include "klcbl/tensor.hpp"

namespace klcbl {

/// Uniform knot vector over [grid_min, grid_max] split into `intervals`
/// pieces and extended by `order` knots beyond each bound, so that exactly
/// intervals + order B-splines of degree `order` are defined.
struct SplineGrid {
  double grid_min = -2.0;
  double grid_max = 2.0;
  std::size_t intervals = 5;
  std::size_t order = 3;

  void validate() const;
  std::size_t basis_count() const { return intervals + order; }
  std::size_t knot_count() const { return intervals + 2 * order + 1; }
  double spacing() const { return (grid_max - grid_min) / static_cast<double>(intervals); }
  double knot(std::size_t i) const;
  std::vector<double> knots() const;

  friend bool operator==(const SplineGrid&, const SplineGrid&) = default;
};

/// Values of all degree-`order` B-spline bases at x by the Cox-de Boor
/// recursion. Bases vanish outside their support, so inputs beyond the
/// extended knots give all zeros.
std::vector<double> bspline_basis(double x, const SplineGrid& grid);

/// Basis values and their derivatives with respect to x, written into spans
/// of length basis_count().
void bspline_basis_with_derivative(double x, const SplineGrid& grid, std::span<double> values,
                                   std::span<double> derivatives);

/// x * sigmoid(x)
double silu(double x);

/// One learnable edge function: omega * (silu(x) + sum_m coeffs[m] * B_m(x)).
struct KanEdge {
  double omega = 1.0;
  std::vector<double> coeffs;
};

double kan_edge_eval(double x, const KanEdge& edge, const SplineGrid& grid);

/// A fully connected layer of KAN edges: out[j] = sum_i phi_{j,i}(x[i]).
template <typename T>
class KanLayer {
 public:
  /// omega = 1 and spline coefficients drawn from N(0, coeff_std^2).
  KanLayer(std::size_t in_dim, std::size_t out_dim, SplineGrid grid, SplitMix64& rng, double coeff_std = 0.1);
  /// All omegas `omega`, all coefficients zero.
  static KanLayer constant(std::size_t in_dim, std::size_t out_dim, SplineGrid grid, T omega);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const SplineGrid& grid() const { return grid_; }

  Tensor<T>& omega() { return omega_; }
  const Tensor<T>& omega() const { return omega_; }
  Tensor<T>& coeffs() { return coeffs_; }
  const Tensor<T>& coeffs() const { return coeffs_; }

  KanEdge edge(std::size_t out, std::size_t in) const;
  void set_edge(std::size_t out, std::size_t in, const KanEdge& edge);

  std::size_t param_count() const { return in_dim_ * out_dim_ * (1 + grid_.basis_count()); }

 private:
  KanLayer(std::size_t in_dim, std::size_t out_dim, SplineGrid grid);

  std::size_t in_dim_;
  std::size_t out_dim_;
  SplineGrid grid_;
  Tensor<T> omega_;   // [out x in]
  Tensor<T> coeffs_;  // [out x in x basis_count]
};

/// Accepts a single vector [in] -> [out] or a batch [B x in] -> [B x out];
/// differentiable in the input, omegas and coefficients.
template <typename T>
Tensor<T> kan_layer_forward(const Tensor<T>& x, const KanLayer<T>& layer);

enum class HeadKind { kKan, kDense };

HeadKind parse_head_kind(std::string_view name);
std::string_view head_kind_name(HeadKind kind);

struct HeadConfig {
  HeadKind kind = HeadKind::kKan;
  std::size_t in_dim = 1024;
  std::size_t hidden_dim = 1024;
  std::size_t out_dim = 3;
  SplineGrid grid;
  double coeff_init_std = 0.1;

  void validate() const;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Learnable scalars of a head built from `cfg`.
std::size_t param_count(const HeadConfig& cfg);

/// W x + b, the linear classifier the KAN head replaces.
template <typename T>
struct DenseHead {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]

  static DenseHead init(std::size_t in_dim, std::size_t out_dim, SplitMix64& rng);
};

/// Two stacked KAN layers: in -> hidden -> out.
template <typename T>
struct KanHead {
  KanLayer<T> hidden;
  KanLayer<T> output;
};

template <typename T>
Tensor<T> dense_head_forward(const Tensor<T>& x, const DenseHead<T>& head);
template <typename T>
Tensor<T> kan_head_forward(const Tensor<T>& x, const KanHead<T>& head);

template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(HeadConfig cfg, SplitMix64& rng);

  /// [in] -> [out] or [B x in] -> [B x out].
  Tensor<T> forward(const Tensor<T>& x) const;

  const HeadConfig& config() const { return cfg_; }
  std::size_t param_count() const { return klcbl::param_count(cfg_); }

  std::optional<KanHead<T>>& kan() { return kan_; }
  const std::optional<KanHead<T>>& kan() const { return kan_; }
  std::optional<DenseHead<T>>& dense() { return dense_; }
  const std::optional<DenseHead<T>>& dense() const { return dense_; }

 private:
  HeadConfig cfg_;
  std::optional<KanHead<T>> kan_;
  std::optional<DenseHead<T>> dense_;
};

}  // namespace klcbl
