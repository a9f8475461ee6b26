#include "klcbl/kan.hpp"

#include <cmath>
#include <string>

#include "klcbl/ops.hpp"

namespace klcbl {

void SplineGrid::validate() const {
  if (!(std::isfinite(grid_min) && std::isfinite(grid_max) && grid_min < grid_max)) {
    throw ConfigError("spline grid: need finite grid_min < grid_max");
  }
  if (intervals == 0) throw ConfigError("spline grid: intervals must be positive");
}

double SplineGrid::knot(std::size_t i) const {
  return grid_min + (static_cast<double>(i) - static_cast<double>(order)) * spacing();
}

std::vector<double> SplineGrid::knots() const {
  std::vector<double> t(knot_count());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = knot(i);
  return t;
}

namespace {

// Cox-de Boor table up to `degree`; returns bases of that degree (count
// knots - 1 - degree).
std::vector<double> cox_de_boor(double x, const std::vector<double>& t, std::size_t degree) {
  const std::size_t intervals = t.size() - 1;
  std::vector<double> n(intervals, 0.0);
  for (std::size_t i = 0; i < intervals; ++i) n[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  for (std::size_t p = 1; p <= degree; ++p) {
    const std::size_t count = intervals - p;
    for (std::size_t i = 0; i < count; ++i) {
      const double left = (x - t[i]) / (t[i + p] - t[i]) * n[i];
      const double right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * n[i + 1];
      n[i] = left + right;
    }
    n.resize(count);
  }
  return n;
}

}  // namespace

std::vector<double> bspline_basis(double x, const SplineGrid& grid) {
  grid.validate();
  return cox_de_boor(x, grid.knots(), grid.order);
}

void bspline_basis_with_derivative(double x, const SplineGrid& grid, std::span<double> values,
                                   std::span<double> derivatives) {
  const std::size_t nb = grid.basis_count();
  if (values.size() != nb || derivatives.size() != nb) throw ShapeError("bspline: output spans must hold basis_count values");
  const std::vector<double> t = grid.knots();
  const std::size_t k = grid.order;
  if (k == 0) {
    const auto v = cox_de_boor(x, t, 0);
    std::copy(v.begin(), v.end(), values.begin());
    std::fill(derivatives.begin(), derivatives.end(), 0.0);
    return;
  }
  const auto lower = cox_de_boor(x, t, k - 1);  // nb + 1 values
  const auto v = cox_de_boor(x, t, k);
  const double kd = static_cast<double>(k);
  for (std::size_t i = 0; i < nb; ++i) {
    values[i] = v[i];
    derivatives[i] = kd / (t[i + k] - t[i]) * lower[i] - kd / (t[i + k + 1] - t[i + 1]) * lower[i + 1];
  }
}

double silu(double x) {
  if (x >= 0.0) return x / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return x * e / (1.0 + e);
}

double kan_edge_eval(double x, const KanEdge& edge, const SplineGrid& grid) {
  if (edge.coeffs.size() != grid.basis_count()) {
    throw ShapeError("kan edge: " + std::to_string(edge.coeffs.size()) + " coefficients for " +
                     std::to_string(grid.basis_count()) + " bases");
  }
  const auto basis = bspline_basis(x, grid);
  double spline = 0.0;
  for (std::size_t m = 0; m < basis.size(); ++m) spline += edge.coeffs[m] * basis[m];
  return edge.omega * (silu(x) + spline);
}

template <typename T>
KanLayer<T>::KanLayer(std::size_t in_dim, std::size_t out_dim, SplineGrid grid)
    : in_dim_(in_dim), out_dim_(out_dim), grid_(grid) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("kan layer: dimensions must be positive");
  grid_.validate();
}

template <typename T>
KanLayer<T>::KanLayer(std::size_t in_dim, std::size_t out_dim, SplineGrid grid, SplitMix64& rng, double coeff_std)
    : KanLayer(in_dim, out_dim, grid) {
  omega_ = Tensor<T>::filled({out_dim, in_dim}, T(1), true);
  std::vector<T> c(out_dim * in_dim * grid_.basis_count());
  for (T& v : c) v = static_cast<T>(coeff_std * rng.normal());
  coeffs_ = Tensor<T>({out_dim, in_dim, grid_.basis_count()}, std::move(c), true);
}

template <typename T>
KanLayer<T> KanLayer<T>::constant(std::size_t in_dim, std::size_t out_dim, SplineGrid grid, T omega) {
  KanLayer layer(in_dim, out_dim, grid);
  layer.omega_ = Tensor<T>::filled({out_dim, in_dim}, omega, true);
  layer.coeffs_ = Tensor<T>::zeros({out_dim, in_dim, layer.grid_.basis_count()}, true);
  return layer;
}

template <typename T>
KanEdge KanLayer<T>::edge(std::size_t out, std::size_t in) const {
  const std::size_t nb = grid_.basis_count();
  KanEdge e;
  e.omega = static_cast<double>(omega_.at(out * in_dim_ + in));
  const auto c = coeffs_.data().subspan((out * in_dim_ + in) * nb, nb);
  e.coeffs.assign(c.begin(), c.end());
  return e;
}

template <typename T>
void KanLayer<T>::set_edge(std::size_t out, std::size_t in, const KanEdge& e) {
  const std::size_t nb = grid_.basis_count();
  if (e.coeffs.size() != nb) throw ShapeError("kan layer: edge has wrong coefficient count");
  omega_.mutable_data()[out * in_dim_ + in] = static_cast<T>(e.omega);
  auto c = coeffs_.mutable_data().subspan((out * in_dim_ + in) * nb, nb);
  for (std::size_t m = 0; m < nb; ++m) c[m] = static_cast<T>(e.coeffs[m]);
}

template <typename T>
Tensor<T> kan_layer_forward(const Tensor<T>& x, const KanLayer<T>& layer) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  const bool batched = x.rank() == 2;
  if (!((x.rank() == 1 && x.dim(0) == in) || (batched && x.dim(1) == in))) {
    throw ShapeError("kan layer: input " + shape_to_string(x.shape()) + " does not match in_dim " + std::to_string(in));
  }
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t nb = layer.grid().basis_count();
  const auto xd = x.data();
  const auto omega = layer.omega().data();
  const auto coeffs = layer.coeffs().data();

  // Per-input quantities shared by every output row.
  std::vector<double> base(batch * in), dbase(batch * in);
  std::vector<double> basis(batch * in * nb), dbasis(batch * in * nb);
  std::vector<std::size_t> lo(batch * in), hi(batch * in);  // nonzero basis range [lo, hi)
  for (std::size_t bi = 0; bi < batch * in; ++bi) {
    const double v = static_cast<double>(xd[bi]);
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    base[bi] = v * s;
    dbase[bi] = s + v * s * (1.0 - s);
    std::span<double> bv(basis.data() + bi * nb, nb), dv(dbasis.data() + bi * nb, nb);
    bspline_basis_with_derivative(v, layer.grid(), bv, dv);
    std::size_t first = nb, last = 0;
    for (std::size_t m = 0; m < nb; ++m) {
      if (bv[m] != 0.0 || dv[m] != 0.0) {
        first = std::min(first, m);
        last = m + 1;
      }
    }
    lo[bi] = first < nb ? first : 0;
    hi[bi] = first < nb ? last : 0;
  }

  std::vector<T> result(batch * out);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) {
        const std::size_t bi = b * in + i;
        const std::size_t edge = j * in + i;
        double spline = 0.0;
        for (std::size_t m = lo[bi]; m < hi[bi]; ++m) spline += static_cast<double>(coeffs[edge * nb + m]) * basis[bi * nb + m];
        acc += static_cast<double>(omega[edge]) * (base[bi] + spline);
      }
      result[b * out + j] = static_cast<T>(acc);
    }

  Shape shape = batched ? Shape{batch, out} : Shape{out};
  auto xn = x.node();
  auto on = layer.omega().node();
  auto cn = layer.coeffs().node();
  return detail::make_result<T>(
      "kan_layer", std::move(shape), std::move(result), {&x, &layer.omega(), &layer.coeffs()},
      [xn, on, cn, batch, in, out, nb, base = std::move(base), dbase = std::move(dbase), basis = std::move(basis),
       dbasis = std::move(dbasis), lo = std::move(lo), hi = std::move(hi)](std::span<const T> g) {
        auto gx = detail::grad_sink(xn);
        auto go = detail::grad_sink(on);
        auto gc = detail::grad_sink(cn);
        const auto& omega = on->data;
        const auto& coeffs = cn->data;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < out; ++j) {
            const double gj = static_cast<double>(g[b * out + j]);
            if (gj == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) {
              const std::size_t bi = b * in + i;
              const std::size_t edge = j * in + i;
              const double w = static_cast<double>(omega[edge]);
              double spline = 0.0, dspline = 0.0;
              for (std::size_t m = lo[bi]; m < hi[bi]; ++m) {
                const double c = static_cast<double>(coeffs[edge * nb + m]);
                spline += c * basis[bi * nb + m];
                dspline += c * dbasis[bi * nb + m];
                if (!gc.empty()) gc[edge * nb + m] += static_cast<T>(gj * w * basis[bi * nb + m]);
              }
              if (!go.empty()) go[edge] += static_cast<T>(gj * (base[bi] + spline));
              if (!gx.empty()) gx[bi] += static_cast<T>(gj * w * (dbase[bi] + dspline));
            }
          }
      });
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "kan") return HeadKind::kKan;
  if (name == "dense") return HeadKind::kDense;
  throw ConfigError("unknown head kind '" + std::string(name) + "', expected kan or dense");
}

std::string_view head_kind_name(HeadKind kind) { return kind == HeadKind::kKan ? "kan" : "dense"; }

void HeadConfig::validate() const {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("head: dimensions must be positive");
  if (kind == HeadKind::kKan) {
    if (hidden_dim == 0) throw ConfigError("head: hidden_dim must be positive");
    grid.validate();
  }
}

std::size_t param_count(const HeadConfig& cfg) {
  if (cfg.kind == HeadKind::kDense) return cfg.in_dim * cfg.out_dim + cfg.out_dim;
  const std::size_t per_edge = 1 + cfg.grid.basis_count();
  return (cfg.in_dim * cfg.hidden_dim + cfg.hidden_dim * cfg.out_dim) * per_edge;
}

template <typename T>
DenseHead<T> DenseHead<T>::init(std::size_t in_dim, std::size_t out_dim, SplitMix64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::vector<T> w(out_dim * in_dim);
  for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  return {Tensor<T>({out_dim, in_dim}, std::move(w), true), Tensor<T>::zeros({out_dim}, true)};
}

template <typename T>
Tensor<T> dense_head_forward(const Tensor<T>& x, const DenseHead<T>& head) {
  if (x.rank() == 1) return add(matvec(head.weight, x), head.bias);
  if (x.rank() == 2) return add_row_bias(matmul_nt(x, head.weight), head.bias);
  throw ShapeError("dense head: input must be a vector or batch, got " + shape_to_string(x.shape()));
}

template <typename T>
Tensor<T> kan_head_forward(const Tensor<T>& x, const KanHead<T>& head) {
  return kan_layer_forward(kan_layer_forward(x, head.hidden), head.output);
}

template <typename T>
ClassifierHead<T>::ClassifierHead(HeadConfig cfg, SplitMix64& rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.kind == HeadKind::kKan) {
    KanLayer<T> hidden(cfg_.in_dim, cfg_.hidden_dim, cfg_.grid, rng, cfg_.coeff_init_std);
    KanLayer<T> output(cfg_.hidden_dim, cfg_.out_dim, cfg_.grid, rng, cfg_.coeff_init_std);
    kan_.emplace(KanHead<T>{std::move(hidden), std::move(output)});
  } else {
    dense_ = DenseHead<T>::init(cfg_.in_dim, cfg_.out_dim, rng);
  }
}

template <typename T>
Tensor<T> ClassifierHead<T>::forward(const Tensor<T>& x) const {
  if (kan_) return kan_head_forward(x, *kan_);
  return dense_head_forward(x, *dense_);
}

#define KLCBL_INSTANTIATE_KAN(T)                                                     \
  template class KanLayer<T>;                                                        \
  template Tensor<T> kan_layer_forward(const Tensor<T>&, const KanLayer<T>&);        \
  template struct DenseHead<T>;                                                      \
  template Tensor<T> dense_head_forward(const Tensor<T>&, const DenseHead<T>&);      \
  template Tensor<T> kan_head_forward(const Tensor<T>&, const KanHead<T>&);          \
  template class ClassifierHead<T>;

KLCBL_INSTANTIATE_KAN(float)
KLCBL_INSTANTIATE_KAN(double)

#undef KLCBL_INSTANTIATE_KAN

}  // namespace klcbl
