#include "homog/homogenizer.hpp"

#include "homog/config.hpp"
#include "homog/parallel.hpp"
#include "homog/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace homog {

// ---------------------------------------------------------------------------
// partition and a^k

PiecewisePartition::PiecewisePartition(int dim, int k) : dim_(dim), k_(k) {
  if (dim != 1 && dim != 2) throw ConfigError("partition dimension must be 1 or 2");
  if (k < 1) throw ConfigError("partition index k must be >= 1");
  m_ = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim)) * k - 1e-12));
}

double PiecewisePartition::diameter() const { return std::sqrt(static_cast<double>(dim_)) / m_; }

std::size_t PiecewisePartition::locate(const Point& y) const {
  std::size_t idx = 0, stride = 1;
  for (int d = 0; d < dim_; ++d) {
    const int i = std::clamp(static_cast<int>(std::floor(y(d) * m_)), 0, m_ - 1);
    idx += stride * static_cast<std::size_t>(i);
    stride *= static_cast<std::size_t>(m_);
  }
  return idx;
}

Point PiecewisePartition::representative(std::size_t piece) const {
  Point c(dim_);
  for (int d = 0; d < dim_; ++d) {
    c(d) = (static_cast<double>(piece % m_) + 0.5) / m_;
    piece /= m_;
  }
  return c;
}

Box PiecewisePartition::bounds(std::size_t piece) const {
  const Point c = representative(piece);
  const double half = 0.5 / m_;
  return {c.array() - half, c.array() + half};
}

PiecewiseFluxOperator build_piecewise_operator(const FluxOperator& op, int k) {
  op.validate();
  return {op, PiecewisePartition(op.dim, k)};
}

WeakProblem build_transmission_problem(const PiecewiseFluxOperator& ak, const Vec& xi, int h,
                                       const TorusGrid& grid) {
  return build_oscillating_problem(ak.base(), xi, h, grid,
                                   [&ak](const Point& x) { return ak.frozen_point(x); });
}

Vec homogenized_flux(const FluxOperator& op, const Point& y, const Vec& tau, const TorusGrid& cell_grid,
                     const SolverConfig& config) {
  SolveResult r = solve_cell_problem(op, y, tau, cell_grid, config);
  if (!r.converged) {
    std::ostringstream msg;
    msg << "cell problem did not converge (residual " << r.residual_norm << ")";
    throw NotConverged(msg.str(), std::move(r));
  }
  return r.mean_flux;
}

// ---------------------------------------------------------------------------
// table

HomogenizedTable::HomogenizedTable(FluxOperator op, PiecewisePartition partition, double tau_box,
                                   int tau_resolution, TorusGrid cell_grid, SolverConfig config,
                                   Eigen::MatrixXd values)
    : op_(std::move(op)),
      partition_(std::move(partition)),
      tau_box_(tau_box),
      tau_res_(tau_resolution),
      cell_grid_(std::move(cell_grid)),
      config_(config),
      values_(std::move(values)) {
  if (!(tau_box_ > 0.0)) throw ConfigError("tau box must be positive");
  if (tau_res_ < 2) throw ConfigError("tau resolution must be >= 2");
  if (values_.rows() != op_.dim || values_.cols() != static_cast<Eigen::Index>(partition_.size() * tau_count()))
    throw ConfigError("table value block has the wrong shape");
}

std::size_t HomogenizedTable::tau_count() const {
  return op_.dim == 1 ? tau_res_ : static_cast<std::size_t>(tau_res_) * tau_res_;
}

Vec HomogenizedTable::tau_node(std::size_t j) const {
  Vec t(op_.dim);
  for (int d = 0; d < op_.dim; ++d) {
    t(d) = -tau_box_ + 2.0 * tau_box_ * static_cast<double>(j % tau_res_) / (tau_res_ - 1);
    j /= tau_res_;
  }
  return t;
}

Vec HomogenizedTable::value(std::size_t piece, std::size_t node) const {
  return values_.col(static_cast<Eigen::Index>(piece * tau_count() + node));
}

bool HomogenizedTable::covers(const Vec& tau) const {
  return (tau.array().abs() <= tau_box_ * (1.0 + 1e-12)).all();
}

Vec HomogenizedTable::interpolate(std::size_t piece, const Vec& tau) const {
  const int dim = op_.dim;
  std::array<int, 2> base{};
  std::array<double, 2> frac{};
  for (int d = 0; d < dim; ++d) {
    const double s = (tau(d) + tau_box_) / (2.0 * tau_box_) * (tau_res_ - 1);
    const int i = std::clamp(static_cast<int>(std::floor(s)), 0, tau_res_ - 2);
    base[d] = i;
    frac[d] = std::clamp(s - i, 0.0, 1.0);
  }
  Vec out = Vec::Zero(dim);
  const int corners = 1 << dim;
  for (int a = 0; a < corners; ++a) {
    double w = 1.0;
    std::size_t node = 0, stride = 1;
    for (int d = 0; d < dim; ++d) {
      const int bit = (a >> d) & 1;
      w *= bit ? frac[d] : 1.0 - frac[d];
      node += stride * static_cast<std::size_t>(base[d] + bit);
      stride *= static_cast<std::size_t>(tau_res_);
    }
    if (w != 0.0) out += w * value(piece, node);
  }
  return out;
}

Vec HomogenizedTable::evaluate(const Point& y, const Vec& tau) const {
  const std::size_t piece = partition_.locate(y);
  if (covers(tau)) return interpolate(piece, tau);
  if (!on_demand_) throw OutOfTableRange("tau outside the tabulated box and on-demand solving is disabled");
  auto key = std::make_pair(piece, std::vector<double>(tau.data(), tau.data() + tau.size()));
  std::shared_future<Vec> fut;
  std::promise<Vec> promise;
  bool owner = false;
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->entries.find(key);
    if (it != cache_->entries.end()) {
      fut = it->second;
    } else {
      fut = promise.get_future().share();
      cache_->entries.emplace(std::move(key), fut);
      owner = true;
    }
  }
  if (owner) {
    try {
      promise.set_value(homogenized_flux(op_, partition_.representative(piece), tau, cell_grid_, config_));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return fut.get();
}

std::size_t HomogenizedTable::on_demand_solves() const {
  std::lock_guard<std::mutex> lock(cache_->mutex);
  return cache_->entries.size();
}

std::string HomogenizedTable::operator_hash() const { return homog::operator_hash(op_); }

void HomogenizedTable::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "homog-table-1";
  m["operator_hash"] = operator_hash();
  m["operator"] = operator_to_json(op_);
  m["partition"] = {{"dim", partition_.dim()}, {"k", partition_.k()}, {"boxes_per_axis", partition_.boxes_per_axis()}};
  m["tau_box"] = tau_box_;
  m["tau_resolution"] = tau_res_;
  m["cell_grid"] = {{"resolution", cell_grid_.resolution(0)}, {"quadrature_order", cell_grid_.quadrature_order()}};
  m["solver"] = solver_to_json(config_);
  m["failed_entries"] = failed_entries;
  m["interpolation_error"] = interpolation_error;
  m["held_out_samples"] = held_out_samples;
  m["values_file"] = "values.bin";
  m["layout"] = "float64, dim values per entry, piece-major, tau node axis 0 fastest";
  m["entries"] = values_.cols();
  std::ofstream(dir / "manifest.json") << m.dump(2) << "\n";
  std::ofstream bin(dir / "values.bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(sizeof(double) * values_.size()));
  if (!bin) throw ConfigError("cannot write table values in " + dir.string());
}

HomogenizedTable HomogenizedTable::load(const std::filesystem::path& dir, const FluxOperator& op) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("missing table manifest in " + dir.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed table manifest: ") + e.what());
  }
  if (m.value("format", "") != "homog-table-1") throw ConfigError("unknown table format");
  if (m.at("operator_hash").get<std::string>() != homog::operator_hash(op))
    throw ConfigError("table operator hash does not match the requested operator");
  PiecewisePartition partition(op.dim, m.at("partition").at("k").get<int>());
  const int res = m.at("cell_grid").at("resolution").get<int>();
  const int order = m.at("cell_grid").at("quadrature_order").get<int>();
  TorusGrid cell = TorusGrid::unit(op.dim, res, order);
  const auto entries = m.at("entries").get<Eigen::Index>();
  Eigen::MatrixXd values(op.dim, entries);
  std::ifstream bin(dir / "values.bin", std::ios::binary);
  bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(sizeof(double) * values.size()));
  if (!bin) throw ConfigError("truncated table values in " + dir.string());
  HomogenizedTable table(op, partition, m.at("tau_box").get<double>(), m.at("tau_resolution").get<int>(), cell,
                         solver_from_json(m.at("solver")), std::move(values));
  table.failed_entries = m.at("failed_entries").get<std::vector<std::size_t>>();
  table.interpolation_error = m.at("interpolation_error").get<double>();
  table.held_out_samples = m.at("held_out_samples").get<std::size_t>();
  return table;
}

HomogenizedTable tabulate_b(const FluxOperator& op, const PiecewisePartition& partition,
                            const TorusGrid& cell_grid, const SolverConfig& config,
                            const TableOptions& options) {
  op.validate();
  if (partition.dim() != op.dim || cell_grid.dim() != op.dim)
    throw ConfigError("table partition / cell grid dimension differs from operator dim");
  const std::size_t pieces = partition.size();
  const std::size_t per_piece = op.dim == 1 ? options.tau_resolution
                                            : static_cast<std::size_t>(options.tau_resolution) * options.tau_resolution;
  // value block is filled after the parallel solves so construction succeeds first
  HomogenizedTable shell(op, partition, options.tau_box, options.tau_resolution, cell_grid, config,
                         Eigen::MatrixXd::Zero(op.dim, static_cast<Eigen::Index>(pieces * per_piece)));
  struct Entry {
    Vec b;
    bool ok;
  };
  auto entries = parallel_map(pieces * per_piece, options.threads, [&](std::size_t e) {
    const std::size_t piece = e / per_piece;
    const Vec tau = shell.tau_node(e % per_piece);
    SolveResult r = solve_cell_problem(op, partition.representative(piece), tau, cell_grid, config);
    return Entry{r.mean_flux, r.converged};
  });
  Eigen::MatrixXd values(op.dim, static_cast<Eigen::Index>(entries.size()));
  std::vector<std::size_t> failed;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    values.col(static_cast<Eigen::Index>(e)) = entries[e].b;
    if (!entries[e].ok) failed.push_back(e);
  }
  HomogenizedTable table(op, partition, options.tau_box, options.tau_resolution, cell_grid, config,
                         std::move(values));
  table.failed_entries = std::move(failed);

  // held-out interpolation check
  auto errors = parallel_map(options.held_out, options.threads, [&](std::size_t i) {
    std::mt19937_64 rng(split_seed(options.seed, i));
    std::uniform_real_distribution<double> u(-0.9 * options.tau_box, 0.9 * options.tau_box);
    const std::size_t piece = rng() % pieces;
    Vec tau(op.dim);
    for (int d = 0; d < op.dim; ++d) tau(d) = u(rng);
    const Vec exact = homogenized_flux(op, partition.representative(piece), tau, cell_grid, config);
    return (table.interpolate(piece, tau) - exact).norm();
  });
  for (double err : errors) table.interpolation_error = std::max(table.interpolation_error, err);
  table.held_out_samples = options.held_out;
  return table;
}

namespace {

class TableClosure final : public FluxClosure {
 public:
  TableClosure(std::shared_ptr<const HomogenizedTable> table, const TorusGrid& grid, bool continuous_y)
      : table_(std::move(table)), reps_(grid.num_quad_points()), scale_(grid.num_quad_points(), 1.0) {
    const PiecewisePartition& part = table_->partition();
    const CoefficientField& coef = table_->op().coefficient;
    for (std::size_t qp = 0; qp < reps_.size(); ++qp) {
      const Point x = grid.quad_point(qp);
      reps_[qp] = part.representative(part.locate(x));
      if (continuous_y) scale_[qp] = coef.y_factor(x) / coef.y_factor(reps_[qp]);
    }
  }

  Vec flux(std::size_t qp, const Vec& zeta) const override { return scale_[qp] * table_->evaluate(reps_[qp], zeta); }

 private:
  std::shared_ptr<const HomogenizedTable> table_;
  std::vector<Point> reps_;
  std::vector<double> scale_;
};

}  // namespace

WeakProblem build_homogenized_problem(std::shared_ptr<const HomogenizedTable> table, const Vec& xi,
                                      const TorusGrid& macro_grid, bool continuous_y) {
  if (!table) throw ConfigError("homogenized problem needs a table");
  if (macro_grid.dim() != table->dim()) throw ConfigError("macro grid dimension differs from table");
  return {macro_grid, std::make_shared<TableClosure>(std::move(table), macro_grid, continuous_y), xi};
}

// ---------------------------------------------------------------------------
// properties of b

BEvaluator direct_evaluator(const FluxOperator& op, const TorusGrid& cell_grid, const SolverConfig& config) {
  BEvaluator b;
  b.dim = op.dim;
  b.p = op.p;
  b.alpha = op.alpha;
  b.beta = op.beta;
  b.eval = [op, cell_grid, config](const Point& y, const Vec& tau) {
    return homogenized_flux(op, y, tau, cell_grid, config);
  };
  const CoefficientField coef = op.coefficient;
  b.piece = [coef](const Point& y) { return coef.piece(y); };
  return b;
}

BEvaluator table_evaluator(std::shared_ptr<const HomogenizedTable> table) {
  BEvaluator b;
  b.dim = table->dim();
  b.p = table->op().p;
  b.alpha = table->op().alpha;
  b.beta = table->op().beta;
  b.eval = [table](const Point& y, const Vec& tau) { return table->evaluate(y, tau); };
  b.piece = [table](const Point& y) { return static_cast<int>(table->partition().locate(y)); };
  return b;
}

namespace {

Point random_unit_point(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point y(dim);
  for (int d = 0; d < dim; ++d) y(d) = u(rng);
  return y;
}

Vec random_tau(std::mt19937_64& rng, int dim, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> expo(-2.0, 0.0);
  Vec dir(dim);
  do {
    for (int d = 0; d < dim; ++d) dir(d) = normal(rng);
  } while (dir.norm() == 0.0);
  return scale * std::pow(10.0, expo(rng)) * dir.normalized();
}

Vec rotate90(const Vec& v, int times) {
  Vec r = v;
  for (int t = 0; t < times; ++t) {
    const double x = r(0);
    r(0) = -r(1);
    r(1) = x;
  }
  return r;
}

constexpr std::array<double, 6> kLadder{0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};

}  // namespace

double rotation_equivariance_deviation(const BEvaluator& b, const Point& y, std::size_t samples,
                                       std::uint64_t seed, double tau_scale, int threads) {
  if (b.dim != 2) return 0.0;
  auto dev = parallel_map(samples, threads, [&](std::size_t i) {
    std::mt19937_64 rng(split_seed(seed ^ 0xd4d4d4d4ull, i));
    const Vec tau = random_tau(rng, 2, tau_scale);
    const Vec base = b.eval(y, tau);
    double worst = 0.0;
    for (int t = 1; t < 4; ++t) worst = std::max(worst, (b.eval(y, rotate90(tau, t)) - rotate90(base, t)).norm());
    return worst;
  });
  return dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
}

PropertyReport verify_b_properties(const BEvaluator& b, const PropertyOptions& options) {
  if (!b.eval) throw ConfigError("property verification needs an evaluator");
  if (options.samples < 2) throw ConfigError("property verification needs >= 2 samples");
  const int dim = b.dim;
  const double p = b.p;
  const double gamma = b.alpha / (b.beta - b.alpha);
  struct Sample {
    bool degenerate = false;
    double zero = 0.0;
    double inner = 0.0;
    double mono = 0.0;
    double holder = 0.0;
  };
  auto samples = parallel_map(options.samples, options.threads, [&](std::size_t i) {
    std::mt19937_64 rng(split_seed(options.seed, i));
    const Point y = random_unit_point(rng, dim);
    const Vec xi1 = random_tau(rng, dim, options.tau_scale);
    const Vec xi2 = (i % 64 == 63) ? xi1 : random_tau(rng, dim, options.tau_scale);
    Sample s;
    s.zero = b.eval(y, zero_vec(dim)).norm();
    if ((xi1 - xi2).norm() == 0.0) {
      s.degenerate = true;
      return s;
    }
    const Vec b1 = b.eval(y, xi1), b2 = b.eval(y, xi2);
    const ConditionTerms m = monotonicity_terms(b1, b2, xi1, xi2, p, b.beta);
    const ConditionTerms c = continuity_terms(b1, b2, xi1, xi2, p, gamma);
    s.inner = m.lhs;
    s.mono = m.lhs / m.rhs;
    s.holder = c.lhs / c.rhs;
    return s;
  });

  PropertyReport rep;
  rep.samples = options.samples;
  rep.holder_exponent = gamma;
  rep.min_inner_product = std::numeric_limits<double>::infinity();
  rep.min_monotonicity_ratio = std::numeric_limits<double>::infinity();
  const std::size_t half = options.samples / 2;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    rep.max_zero_norm = std::max(rep.max_zero_norm, s.zero);
    if (s.degenerate) {
      ++rep.degenerate_pairs;
      continue;
    }
    rep.min_inner_product = std::min(rep.min_inner_product, s.inner);
    rep.min_monotonicity_ratio = std::min(rep.min_monotonicity_ratio, s.mono);
    rep.holder_ratio_full = std::max(rep.holder_ratio_full, s.holder);
    if (i < half) rep.holder_ratio_half = std::max(rep.holder_ratio_half, s.holder);
  }
  rep.monotone = rep.min_inner_product > 0.0;
  rep.zero_law = rep.max_zero_norm <= 1e-8;
  rep.holder_stable = std::isfinite(rep.holder_ratio_full) && rep.holder_ratio_half > 0.0 &&
                      std::abs(rep.holder_ratio_full - rep.holder_ratio_half) < 0.10 * rep.holder_ratio_half;
  if (rep.min_inner_product < -1e-12) {
    std::ostringstream msg;
    msg << "homogenized operator is not monotone: inner product " << rep.min_inner_product;
    throw MonotonicityViolation(msg.str());
  }

  // (i) y-modulus within pieces
  const double q = p / (p - 1.0);
  const std::size_t per_level = options.modulus_samples_per_level;
  auto omegas = parallel_map(kLadder.size() * per_level, options.threads, [&](std::size_t i) {
    const double delta = kLadder[i / per_level];
    std::mt19937_64 rng(split_seed(options.seed ^ 0x9e3779b9ull, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Point y1 = random_unit_point(rng, dim);
      Vec dir(dim);
      for (int d = 0; d < dim; ++d) dir(d) = normal(rng);
      if (dir.norm() == 0.0) continue;
      const Point y2 = y1 + delta * dir.normalized();
      if ((y2.array() < 0.0).any() || (y2.array() >= 1.0).any()) continue;
      if (b.piece(y1) != b.piece(y2)) continue;
      const Vec xi = random_tau(rng, dim, options.tau_scale);
      const double diff = (b.eval(y1, xi) - b.eval(y2, xi)).norm();
      return std::pow(diff, q) / (1.0 + std::pow(xi.norm(), p));
    }
    return 0.0;
  });
  std::vector<double> seq;
  for (std::size_t level = 0; level < kLadder.size(); ++level) {
    ModulusRow row{kLadder[level], 0.0, per_level};
    for (std::size_t j = 0; j < per_level; ++j) row.omega = std::max(row.omega, omegas[level * per_level + j]);
    rep.modulus.push_back(row);
    seq.push_back(row.omega);
  }
  rep.modulus_decays = non_increasing_with_wobble(seq, 0.10, 1, 1e-14) && seq.back() <= seq.front();

  if (options.check_rotation) {
    std::mt19937_64 rng(split_seed(options.seed, 0xfeedull));
    const Point y = random_unit_point(rng, dim);
    rep.rotation_deviation = rotation_equivariance_deviation(b, y, options.rotation_samples, options.seed,
                                                              options.tau_scale, options.threads);
    rep.rotation_equivariant = rep.rotation_deviation <= 1e-6;
  }
  return rep;
}

std::string PropertyReport::to_csv() const {
  std::ostringstream os;
  os << "property,samples,observed,threshold,pass\r\n";
  auto row = [&](const std::string& name, std::size_t n, double obs, double thr, bool pass) {
    os << name << ',' << n << ',' << format_real(obs) << ',' << format_real(thr) << ','
       << (pass ? "true" : "false") << "\r\n";
  };
  row("monotonicity_min_inner_product", samples - degenerate_pairs, min_inner_product, 0.0, monotone);
  row("monotonicity_min_ratio", samples - degenerate_pairs, min_monotonicity_ratio, 0.0, monotone);
  row("holder_ratio_half", samples / 2, holder_ratio_half, 0.0, std::isfinite(holder_ratio_half));
  row("holder_ratio_full", samples - degenerate_pairs, holder_ratio_full, 0.10, holder_stable);
  row("zero_law_max_norm", samples, max_zero_norm, 1e-8, zero_law);
  row("degenerate_pairs", samples, static_cast<double>(degenerate_pairs), 0.0, true);
  for (const auto& m : modulus)
    row("y_modulus_" + format_real(m.distance), m.samples, m.omega, 0.0, modulus_decays);
  if (rotation_deviation >= 0.0) row("rotation_deviation", 0, rotation_deviation, 1e-6, rotation_equivariant);
  return os.str();
}

}  // namespace homog
