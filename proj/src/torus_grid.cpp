#include "homog/torus_grid.hpp"

#include <cmath>
#include <string>

namespace homog {

void gauss_legendre_unit(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  std::vector<double> x, w;
  switch (order) {
    case 1:
      x = {0.0};
      w = {2.0};
      break;
    case 2:
      x = {-1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
      w = {1.0, 1.0};
      break;
    case 3:
      x = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
      w = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      break;
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      x = {-b, -a, a, b};
      w = {wb, wa, wa, wb};
      break;
    }
    case 5: {
      const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
      const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
      x = {-b, -a, 0.0, a, b};
      w = {wb, wa, 128.0 / 225.0, wa, wb};
      break;
    }
    default:
      throw ConfigError("quadrature order must be in 1..5, got " + std::to_string(order));
  }
  nodes.resize(x.size());
  weights.resize(w.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    nodes[i] = 0.5 * (x[i] + 1.0);
    weights[i] = 0.5 * w[i];
  }
}

namespace {

std::shared_ptr<const ReferenceCell> make_reference(int dim, int order) {
  std::vector<double> gx, gw;
  gauss_legendre_unit(order, gx, gw);
  auto ref = std::make_shared<ReferenceCell>();
  ref->dim = dim;
  ref->corners = 1 << dim;
  const int m = static_cast<int>(gx.size());
  ref->points = dim == 1 ? m : m * m;
  for (int q = 0; q < ref->points; ++q) {
    const int q0 = q % m;
    const int q1 = q / m;
    std::array<double, 2> s{gx[q0], dim == 2 ? gx[q1] : 0.0};
    ref->unit.push_back(s[0]);
    if (dim == 2) ref->unit.push_back(s[1]);
    ref->weight.push_back(dim == 1 ? gw[q0] : gw[q0] * gw[q1]);
    for (int a = 0; a < ref->corners; ++a) {
      double value = 1.0;
      std::array<double, 2> hat{};
      for (int d = 0; d < dim; ++d) hat[d] = ((a >> d) & 1) ? s[d] : 1.0 - s[d];
      for (int d = 0; d < dim; ++d) value *= hat[d];
      ref->value.push_back(value);
      for (int d = 0; d < dim; ++d) {
        double g = ((a >> d) & 1) ? 1.0 : -1.0;
        for (int e = 0; e < dim; ++e)
          if (e != d) g *= hat[e];
        ref->dshape.push_back(g);
      }
    }
  }
  return ref;
}

inline int wrap_index(long i, int n) {
  long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

}  // namespace

TorusGrid::TorusGrid(int dim, std::array<int, 2> resolution, std::array<double, 2> lengths,
                     int quadrature_order)
    : dim_(dim), res_(resolution), len_(lengths), order_(quadrature_order) {
  if (dim != 1 && dim != 2) throw ConfigError("grid dimension must be 1 or 2");
  if (dim == 1) {
    res_[1] = 1;
    len_[1] = 1.0;
  }
  for (int d = 0; d < dim; ++d) {
    if (res_[d] < 2) throw ConfigError("grid resolution per axis must be >= 2");
    if (!(len_[d] > 0.0) || !std::isfinite(len_[d]))
      throw ConfigError("grid cell lengths must be positive");
  }
  ref_ = make_reference(dim, quadrature_order);
}

std::size_t TorusGrid::node_index(int i0, int i1) const {
  return static_cast<std::size_t>(wrap_index(i0, res_[0])) +
         static_cast<std::size_t>(res_[0]) * wrap_index(i1, res_[1]);
}

Point TorusGrid::node_point(std::size_t node) const {
  Point x(dim_);
  x(0) = spacing(0) * static_cast<double>(node % res_[0]);
  if (dim_ == 2) x(1) = spacing(1) * static_cast<double>(node / res_[0]);
  return x;
}

std::array<std::size_t, 4> TorusGrid::cell_nodes(std::size_t cell) const {
  const int i0 = static_cast<int>(cell % res_[0]);
  const int i1 = static_cast<int>(cell / res_[0]);
  std::array<std::size_t, 4> nodes{};
  for (int a = 0; a < ref_->corners; ++a) nodes[a] = node_index(i0 + (a & 1), i1 + ((a >> 1) & 1));
  return nodes;
}

Point TorusGrid::cell_origin(std::size_t cell) const { return node_point(cell); }

Point TorusGrid::quad_point(std::size_t qp) const {
  const int pts = ref_->points;
  const std::size_t cell = qp / pts;
  const int q = static_cast<int>(qp % pts);
  Point x = cell_origin(cell);
  for (int d = 0; d < dim_; ++d) x(d) += spacing(d) * ref_->unit[q * dim_ + d];
  return x;
}

Point TorusGrid::wrap(const Point& x) const {
  Point y = x;
  for (int d = 0; d < dim_; ++d) {
    y(d) = std::fmod(x(d), len_[d]);
    if (y(d) < 0.0) y(d) += len_[d];
    if (y(d) >= len_[d]) y(d) = 0.0;
  }
  return y;
}

namespace {

struct Locator {
  std::array<int, 2> base{};
  std::array<double, 2> frac{};
};

Locator locate(const TorusGrid& g, const Point& x) {
  Locator loc;
  for (int d = 0; d < g.dim(); ++d) {
    const double s = x(d) / g.spacing(d);
    const double f = std::floor(s);
    loc.base[d] = wrap_index(static_cast<long>(f), g.resolution(d));
    loc.frac[d] = s - f;
  }
  return loc;
}

}  // namespace

double TorusGrid::interpolate(const Eigen::VectorXd& nodal, const Point& x) const {
  const Locator loc = locate(*this, x);
  if (dim_ == 1) {
    const double a = nodal(node_index(loc.base[0]));
    const double b = nodal(node_index(loc.base[0] + 1));
    return (1.0 - loc.frac[0]) * a + loc.frac[0] * b;
  }
  const double s = loc.frac[0], t = loc.frac[1];
  const int i = loc.base[0], j = loc.base[1];
  return (1 - s) * (1 - t) * nodal(node_index(i, j)) + s * (1 - t) * nodal(node_index(i + 1, j)) +
         (1 - s) * t * nodal(node_index(i, j + 1)) + s * t * nodal(node_index(i + 1, j + 1));
}

Vec TorusGrid::interpolate_gradient(const Eigen::VectorXd& nodal, const Point& x) const {
  const Locator loc = locate(*this, x);
  Vec g(dim_);
  if (dim_ == 1) {
    g(0) = (nodal(node_index(loc.base[0] + 1)) - nodal(node_index(loc.base[0]))) / spacing(0);
    return g;
  }
  const double s = loc.frac[0], t = loc.frac[1];
  const int i = loc.base[0], j = loc.base[1];
  const double u00 = nodal(node_index(i, j)), u10 = nodal(node_index(i + 1, j));
  const double u01 = nodal(node_index(i, j + 1)), u11 = nodal(node_index(i + 1, j + 1));
  g(0) = ((1 - t) * (u10 - u00) + t * (u11 - u01)) / spacing(0);
  g(1) = ((1 - s) * (u01 - u00) + s * (u11 - u10)) / spacing(1);
  return g;
}

bool TorusGrid::operator==(const TorusGrid& other) const {
  return dim_ == other.dim_ && res_ == other.res_ && len_ == other.len_ && order_ == other.order_;
}

}  // namespace homog
