#pragma once

#include "homog/types.hpp"

#include <array>
#include <cstddef>
#include <memory>
#include <vector>

namespace homog {

/// Q1 shape data on the reference cell, tabulated at the tensor Gauss points.
struct ReferenceCell {
  int dim = 1;
  int corners = 2;           // 2^dim
  int points = 2;            // quadrature points per cell
  std::vector<double> unit;  // unit-cell coordinates of each point, dim per point
  std::vector<double> weight;  // reference weights, sum 1
  std::vector<double> value;   // shape values, corners per point
  std::vector<double> dshape;  // reference gradients, corners*dim per point: [q][a][d]
  // corner a has offset bit d set iff (a >> d) & 1
};

/// Uniform periodic tensor grid on the rectangle Y = [0,L0) x [0,L1).
///
/// Nodes coincide with cell origins, so a grid with N nodes per axis has N
/// cells per axis. Node index = i0 + N0 * i1 (axis 0 fastest). Quadrature
/// point index = cell * points_per_cell + q.
class TorusGrid {
 public:
  TorusGrid() : TorusGrid(1, {2, 1}) {}
  TorusGrid(int dim, std::array<int, 2> resolution, std::array<double, 2> lengths = {1.0, 1.0},
            int quadrature_order = 2);

  static TorusGrid line(int n, int quadrature_order = 2) {
    return TorusGrid(1, {n, 1}, {1.0, 1.0}, quadrature_order);
  }
  static TorusGrid square(int n, int quadrature_order = 2) {
    return TorusGrid(2, {n, n}, {1.0, 1.0}, quadrature_order);
  }
  /// Same shape as `dim`-dimensional unit grid with n nodes per axis.
  static TorusGrid unit(int dim, int n, int quadrature_order = 2) {
    return dim == 1 ? line(n, quadrature_order) : square(n, quadrature_order);
  }

  int dim() const { return dim_; }
  int resolution(int axis) const { return res_[axis]; }
  double length(int axis) const { return len_[axis]; }
  double spacing(int axis) const { return len_[axis] / res_[axis]; }
  int quadrature_order() const { return order_; }

  std::size_t num_nodes() const { return static_cast<std::size_t>(res_[0]) * res_[1]; }
  std::size_t num_cells() const { return num_nodes(); }
  int points_per_cell() const { return ref_->points; }
  int corners() const { return ref_->corners; }
  std::size_t num_quad_points() const { return num_cells() * ref_->points; }

  double measure() const { return dim_ == 1 ? len_[0] : len_[0] * len_[1]; }
  double cell_volume() const { return measure() / static_cast<double>(num_cells()); }
  const ReferenceCell& reference() const { return *ref_; }

  std::size_t node_index(int i0, int i1 = 0) const;
  Point node_point(std::size_t node) const;
  std::array<std::size_t, 4> cell_nodes(std::size_t cell) const;
  Point cell_origin(std::size_t cell) const;
  Point quad_point(std::size_t qp) const;
  double quad_weight(std::size_t qp) const {
    return ref_->weight[qp % ref_->points] * cell_volume();
  }

  /// Reduce x into [0, L) per axis.
  Point wrap(const Point& x) const;

  /// Value of the multilinear interpolant of nodal data at x (periodic).
  double interpolate(const Eigen::VectorXd& nodal, const Point& x) const;
  /// Gradient of the multilinear interpolant at x.
  Vec interpolate_gradient(const Eigen::VectorXd& nodal, const Point& x) const;

  bool operator==(const TorusGrid& other) const;
  bool operator!=(const TorusGrid& other) const { return !(*this == other); }

 private:
  int dim_;
  std::array<int, 2> res_;
  std::array<double, 2> len_;
  int order_;
  std::shared_ptr<const ReferenceCell> ref_;
};

/// Gauss-Legendre rule on [0,1] with `order` points (1..5).
void gauss_legendre_unit(int order, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace homog
