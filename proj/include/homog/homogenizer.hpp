#pragma once

#include "homog/solver.hpp"

#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace homog {

/// Uniform split of Y = [0,1]^dim into boxes of diameter <= 1/k.
///
/// In dim 2 the box count per axis is ceil(sqrt(2) k), so the diameter bound
/// holds; representatives are the box centers.
class PiecewisePartition {
 public:
  PiecewisePartition(int dim, int k);

  int dim() const { return dim_; }
  int k() const { return k_; }
  int boxes_per_axis() const { return m_; }
  std::size_t size() const { return dim_ == 1 ? m_ : static_cast<std::size_t>(m_) * m_; }
  double diameter() const;

  std::size_t locate(const Point& y) const;
  Point representative(std::size_t piece) const;
  Box bounds(std::size_t piece) const;

 private:
  int dim_;
  int k_;
  int m_;
};

/// a^k(y, z, xi) = a(y_i^k, z, xi) for y in piece i.
class PiecewiseFluxOperator {
 public:
  PiecewiseFluxOperator(FluxOperator op, PiecewisePartition partition)
      : op_(std::move(op)), partition_(std::move(partition)) {}

  const FluxOperator& base() const { return op_; }
  const PiecewisePartition& partition() const { return partition_; }

  Point frozen_point(const Point& y) const { return partition_.representative(partition_.locate(y)); }
  double coefficient(const Point& y, const Point& z) const { return op_.coefficient(frozen_point(y), z); }
  Vec eval(const Point& y, const Point& z, const Vec& xi) const {
    return eval_flux(op_, frozen_point(y), z, xi);
  }

 private:
  FluxOperator op_;
  PiecewisePartition partition_;
};

PiecewiseFluxOperator build_piecewise_operator(const FluxOperator& op, int k);

/// Transmission problem with a^k(x, h x, .).
WeakProblem build_transmission_problem(const PiecewiseFluxOperator& ak, const Vec& xi, int h,
                                       const TorusGrid& grid);

/// b(y, tau) = |Z|^{-1} int_Z a(y, z, tau + Dv) dz. Throws NotConverged.
Vec homogenized_flux(const FluxOperator& op, const Point& y, const Vec& tau, const TorusGrid& cell_grid,
                     const SolverConfig& config = {});

class OutOfTableRange : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Samples b(y_i, tau_j) on piece representatives and a tensor tau grid over [-T, T]^dim.
/// Lookup is nearest-piece in y and multilinear in tau. Outside the box an exact cell
/// solve is run on demand (cached, deduplicated) unless on-demand solving is disabled.
class HomogenizedTable {
 public:
  HomogenizedTable(FluxOperator op, PiecewisePartition partition, double tau_box, int tau_resolution,
                   TorusGrid cell_grid, SolverConfig config, Eigen::MatrixXd values);

  const FluxOperator& op() const { return op_; }
  const PiecewisePartition& partition() const { return partition_; }
  double tau_box() const { return tau_box_; }
  int tau_resolution() const { return tau_res_; }
  const TorusGrid& cell_grid() const { return cell_grid_; }
  const SolverConfig& solver_config() const { return config_; }
  int dim() const { return op_.dim; }
  std::size_t tau_count() const;
  Vec tau_node(std::size_t j) const;
  /// Stored b for (piece, tau node).
  Vec value(std::size_t piece, std::size_t tau_node) const;
  const Eigen::MatrixXd& values() const { return values_; }

  bool covers(const Vec& tau) const;
  Vec interpolate(std::size_t piece, const Vec& tau) const;
  /// b^k(y, tau) through the table, with on-demand fallback outside the box.
  Vec evaluate(const Point& y, const Vec& tau) const;

  void set_on_demand(bool enabled) { on_demand_ = enabled; }
  bool on_demand() const { return on_demand_; }
  std::size_t on_demand_solves() const;

  std::vector<std::size_t> failed_entries;
  bool partial() const { return !failed_entries.empty(); }
  double interpolation_error = 0.0;  // max |b_interp - b_exact| on the held-out sample
  std::size_t held_out_samples = 0;

  std::string operator_hash() const;

  /// Directory with manifest.json and values.bin.
  void save(const std::filesystem::path& dir) const;
  /// Reload, validating the stored operator hash against `op`.
  static HomogenizedTable load(const std::filesystem::path& dir, const FluxOperator& op);

 private:
  FluxOperator op_;
  PiecewisePartition partition_;
  double tau_box_;
  int tau_res_;
  TorusGrid cell_grid_;
  SolverConfig config_;
  Eigen::MatrixXd values_;  // dim x (pieces * tau_count), piece-major
  bool on_demand_ = true;

  struct Cache {
    std::mutex mutex;
    std::map<std::pair<std::size_t, std::vector<double>>, std::shared_future<Vec>> entries;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

struct TableOptions {
  double tau_box = 4.0;
  int tau_resolution = 17;
  std::size_t held_out = 8;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Default tau box T = 4 (1 + |xi|).
inline double default_tau_box(const Vec& xi) { return 4.0 * (1.0 + xi.norm()); }

HomogenizedTable tabulate_b(const FluxOperator& op, const PiecewisePartition& partition,
                            const TorusGrid& cell_grid, const SolverConfig& config,
                            const TableOptions& options = {});

/// u^xi problem for b^k read from the table; FD Jacobian of the interpolant.
///
/// With `continuous_y` the piece value is rescaled by m(x) / m(y_i), where m is the
/// y-modulation of the coefficient. The cell problem is invariant under a constant
/// factor on lambda, so this gives b(x, .) itself rather than b^k.
WeakProblem build_homogenized_problem(std::shared_ptr<const HomogenizedTable> table, const Vec& xi,
                                      const TorusGrid& macro_grid, bool continuous_y = false);

// ---------------------------------------------------------------------------
// Property verification for b

struct BEvaluator {
  int dim = 1;
  double p = 2.0;
  double alpha = 1.0;
  double beta = 2.0;
  std::function<Vec(const Point& y, const Vec& tau)> eval;
  std::function<int(const Point& y)> piece = [](const Point&) { return 0; };
};

BEvaluator direct_evaluator(const FluxOperator& op, const TorusGrid& cell_grid, const SolverConfig& config);
BEvaluator table_evaluator(std::shared_ptr<const HomogenizedTable> table);

struct PropertyReport {
  std::size_t samples = 0;
  std::size_t degenerate_pairs = 0;
  double min_inner_product = 0.0;     // (ii)
  double min_monotonicity_ratio = 0.0;
  bool monotone = true;
  double holder_exponent = 1.0;       // gamma = alpha / (beta - alpha)
  double holder_ratio_half = 0.0;     // (iii), first half of the samples
  double holder_ratio_full = 0.0;
  bool holder_stable = true;          // relative change < 10 %
  double max_zero_norm = 0.0;         // (iv)
  bool zero_law = true;
  std::vector<ModulusRow> modulus;    // (i)
  bool modulus_decays = true;
  double rotation_deviation = -1.0;   // D4 check, < 0 when not run
  bool rotation_equivariant = true;

  std::string to_csv() const;
};

struct PropertyOptions {
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool check_rotation = false;  // only meaningful for D4-symmetric cells
  std::size_t rotation_samples = 16;
  std::size_t modulus_samples_per_level = 16;
  double tau_scale = 2.0;
};

/// Throws MonotonicityViolation on a negative inner product.
PropertyReport verify_b_properties(const BEvaluator& b, const PropertyOptions& options);

/// max |b(y, R tau) - R b(y, tau)| over 90-degree rotations R and seeded tau samples.
double rotation_equivariance_deviation(const BEvaluator& b, const Point& y, std::size_t samples,
                                       std::uint64_t seed, double tau_scale, int threads);

}  // namespace homog
