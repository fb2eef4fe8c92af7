#pragma once

#include "homog/periodic_field.hpp"

#include <filesystem>

namespace homog {

// Binary container, little-endian:
//   char[8]  magic "HOMOGF01"
//   uint32   dim
//   uint32   resolution[2]   (second entry 1 in 1D)
//   float64  lengths[2]      (second entry 1 in 1D)
//   uint32   quadrature order
//   uint32   mean_zero flag
//   float64  values[num_nodes], row-major (axis 0 fastest)
void write_field(const std::filesystem::path& path, const PeriodicScalarField& u);
PeriodicScalarField read_field(const std::filesystem::path& path);

/// CSV with header x[,y],value.
void write_field_csv(const std::filesystem::path& path, const PeriodicScalarField& u);

}  // namespace homog
