#pragma once

#include <vector>

#include "clab/numerics.hpp"

namespace clab {

// Convex hull of a point cloud in R^d (1 <= d <= 8), triangulated boundary.
// Built by quickhull; coplanar points within the tolerance are absorbed into
// facets rather than becoming vertices.
class ConvexHull {
 public:
  static constexpr int kMaxDim = 8;

  struct Facet {
    std::vector<int> vertices;  // d point indices
    Vec normal;                 // outward, unit length
    double offset = 0.0;        // normal . x <= offset on the hull
  };

  // `points` is d x m. Throws DegenerateHull when the cloud is not
  // full-dimensional and DimTooLarge above kMaxDim.
  explicit ConvexHull(const Mat& points, double rel_eps = 1e-10);

  int dim() const { return dim_; }
  double volume() const { return volume_; }
  const Mat& points() const { return points_; }
  const std::vector<Facet>& facets() const { return facets_; }
  const Vec& interior_point() const { return interior_; }
  std::vector<int> vertex_indices() const;

  // Volumes of the cone simplices conv(interior_point, facet); aligned with
  // facets().
  const std::vector<double>& cone_volumes() const { return cone_volumes_; }

  // Radial function about the origin, which must be interior.
  double radial(const Vec& theta) const;
  double support(const Vec& theta) const;
  bool contains_origin_interior() const;

 private:
  void build(double rel_eps);

  int dim_ = 0;
  Mat points_;
  Vec interior_;
  std::vector<Facet> facets_;
  std::vector<double> cone_volumes_;
  double volume_ = 0.0;
};

// Volume of the simplex with the given d+1 columns.
double simplex_volume(const Mat& vertices);

}  // namespace clab
