#include "homog/field_io.hpp"

#include "homog/report.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace homog {

namespace {

constexpr char kMagic[8] = {'H', 'O', 'M', 'O', 'G', 'F', '0', '1'};

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("truncated field container");
  return v;
}

}  // namespace

void write_field(const std::filesystem::path& path, const PeriodicScalarField& u) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  const TorusGrid& g = u.grid();
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.resolution(0)));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.resolution(1)));
  put<double>(os, g.length(0));
  put<double>(os, g.length(1));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.quadrature_order()));
  put<std::uint32_t>(os, u.mean_zero() ? 1u : 0u);
  os.write(reinterpret_cast<const char*>(u.values().data()),
           static_cast<std::streamsize>(sizeof(double) * u.values().size()));
}

PeriodicScalarField read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError(path.string() + " is not a field container");
  const int dim = static_cast<int>(get<std::uint32_t>(is));
  const int r0 = static_cast<int>(get<std::uint32_t>(is));
  const int r1 = static_cast<int>(get<std::uint32_t>(is));
  const double l0 = get<double>(is);
  const double l1 = get<double>(is);
  const int order = static_cast<int>(get<std::uint32_t>(is));
  const bool mean_zero = get<std::uint32_t>(is) != 0;
  TorusGrid grid(dim, {r0, r1}, {l0, l1}, order);
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.num_nodes()));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!is) throw ConfigError("truncated field payload in " + path.string());
  return {grid, std::move(v), mean_zero};
}

void write_field_csv(const std::filesystem::path& path, const PeriodicScalarField& u) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  const TorusGrid& g = u.grid();
  os << (g.dim() == 1 ? "x,value\n" : "x,y,value\n");
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const Point x = g.node_point(i);
    os << format_real(x(0)) << ',';
    if (g.dim() == 2) os << format_real(x(1)) << ',';
    os << format_real(u[i]) << '\n';
  }
}

}  // namespace homog
