#include "clab/subspace.hpp"

#include "clab/error.hpp"

namespace clab {

Subspace make_subspace(const Mat& rows) {
  if (rows.rows() < 1 || rows.rows() > rows.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "subspace dimension must lie in [1, n]");
  }
  if (numerics::orthonormality_defect(rows) > 1e-12) {
    throw Error(ErrorCode::kNonOrthonormalBasis, "basis rows are not orthonormal");
  }
  return Subspace{static_cast<int>(rows.cols()), rows};
}

Subspace coordinate_subspace(int ambient, std::initializer_list<int> axes) {
  Mat rows = Mat::Zero(static_cast<Eigen::Index>(axes.size()), ambient);
  Eigen::Index r = 0;
  for (int a : axes) {
    if (a < 0 || a >= ambient) throw Error(ErrorCode::kInvalidArgument, "axis out of range");
    rows(r++, a) = 1.0;
  }
  return make_subspace(rows);
}

}  // namespace clab
