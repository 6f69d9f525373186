#pragma once

#include <cstdint>

#include "clab/numerics.hpp"

namespace clab {

// A k-dimensional linear subspace of R^n given by k orthonormal rows.
struct Subspace {
  int ambient = 0;
  Mat basis;  // k x n

  int dim() const { return static_cast<int>(basis.rows()); }
  Vec project(const Vec& x) const { return basis * x; }
};

// Validates orthonormality to 1e-12 (NonOrthonormalBasis otherwise).
Subspace make_subspace(const Mat& rows);

// span of the listed coordinate axes.
Subspace coordinate_subspace(int ambient, std::initializer_list<int> axes);

}  // namespace clab
