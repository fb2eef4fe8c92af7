#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace homog {

// Points and vectors live in R^1 or R^2. Fixed max size keeps them on the stack.
template <typename Scalar>
using SmallVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, 2, 1>;
template <typename Scalar>
using SmallMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

using Vec = SmallVector<double>;
using Mat = SmallMatrix<double>;
using Point = Vec;

inline Vec zero_vec(int dim) { return Vec::Zero(dim); }
inline Vec unit_vec(int dim, int axis) {
  Vec e = Vec::Zero(dim);
  e(axis) = 1.0;
  return e;
}

/// Invalid input or configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace homog
