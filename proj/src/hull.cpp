#include "clab/hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "clab/error.hpp"

namespace clab {
namespace {

struct WorkFacet {
  std::vector<int> verts;
  std::vector<int> neighbors;  // neighbors[i] is across the ridge opposite verts[i]
  Vec normal;
  double offset = 0.0;
  std::vector<int> outside;
  int furthest = -1;
  double furthest_dist = 0.0;
  bool alive = true;
  int visit = -1;
};

double factorial(int d) {
  double f = 1.0;
  for (int i = 2; i <= d; ++i) f *= i;
  return f;
}

// Unit normal of the hyperplane through the columns of `v` (d points in R^d),
// oriented away from `inside`.
bool hyperplane(const Mat& v, const Vec& inside, Vec& normal, double& offset) {
  const int d = static_cast<int>(v.rows());
  if (d == 1) {
    normal = Vec::Constant(1, v(0, 0) >= inside(0) ? 1.0 : -1.0);
    offset = normal(0) * v(0, 0);
    return v(0, 0) != inside(0);
  }
  Mat edges(d, d - 1);
  for (int k = 1; k < d; ++k) edges.col(k - 1) = v.col(k) - v.col(0);
  Eigen::HouseholderQR<Mat> qr(edges);
  const Mat q = qr.householderQ();
  normal = q.col(d - 1);
  offset = normal.dot(v.col(0));
  const double side = normal.dot(inside) - offset;
  if (side > 0.0) {
    normal = -normal;
    offset = -offset;
  }
  return std::isfinite(offset);
}

}  // namespace

double simplex_volume(const Mat& vertices) {
  const int d = static_cast<int>(vertices.rows());
  Mat e(d, d);
  for (int k = 0; k < d; ++k) e.col(k) = vertices.col(k + 1) - vertices.col(0);
  return std::fabs(e.determinant()) / factorial(d);
}

ConvexHull::ConvexHull(const Mat& points, double rel_eps)
    : dim_(static_cast<int>(points.rows())), points_(points) {
  if (dim_ < 1) throw Error(ErrorCode::kInvalidArgument, "hull of 0-dim points");
  if (dim_ > kMaxDim) {
    throw Error(ErrorCode::kDimTooLarge,
                "hull volume supports dim <= 8, got " + std::to_string(dim_));
  }
  if (points_.cols() < dim_ + 1) {
    throw Error(ErrorCode::kDegenerateHull, "need at least dim+1 points");
  }
  build(rel_eps);
}

void ConvexHull::build(double rel_eps) {
  const int d = dim_;
  const int m = static_cast<int>(points_.cols());
  const Vec lo = points_.rowwise().minCoeff();
  const Vec hi = points_.rowwise().maxCoeff();
  const double extent = (hi - lo).norm();
  if (!(extent > 0.0)) throw Error(ErrorCode::kDegenerateHull, "all points coincide");
  const double eps = rel_eps * extent;

  // Initial simplex: greedy farthest points from the growing affine hull.
  std::vector<int> simplex;
  {
    int i0 = 0;
    for (int i = 1; i < m; ++i) {
      if (points_(0, i) < points_(0, i0)) i0 = i;
    }
    simplex.push_back(i0);
    std::vector<Vec> basis;
    for (int k = 0; k < d; ++k) {
      int best = -1;
      double best_dist = 0.0;
      for (int i = 0; i < m; ++i) {
        Vec r = points_.col(i) - points_.col(i0);
        for (const Vec& b : basis) r -= r.dot(b) * b;
        const double dist = r.norm();
        if (dist > best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      if (best < 0 || best_dist <= eps) {
        throw Error(ErrorCode::kDegenerateHull, "points are not full-dimensional");
      }
      Vec r = points_.col(best) - points_.col(i0);
      for (const Vec& b : basis) r -= r.dot(b) * b;
      basis.push_back(r.normalized());
      simplex.push_back(best);
    }
  }

  interior_ = Vec::Zero(d);
  for (int i : simplex) interior_ += points_.col(i);
  interior_ /= (d + 1);

  std::vector<WorkFacet> work;
  auto make_facet = [&](std::vector<int> verts) {
    WorkFacet f;
    Mat v(d, d);
    for (int k = 0; k < d; ++k) v.col(k) = points_.col(verts[k]);
    if (!hyperplane(v, interior_, f.normal, f.offset)) {
      throw Error(ErrorCode::kDegenerateHull, "degenerate facet");
    }
    f.verts = std::move(verts);
    f.neighbors.assign(d, -1);
    work.push_back(std::move(f));
    return static_cast<int>(work.size()) - 1;
  };

  for (int j = 0; j <= d; ++j) {
    std::vector<int> verts;
    for (int k = 0; k <= d; ++k) {
      if (k != j) verts.push_back(simplex[k]);
    }
    make_facet(std::move(verts));
  }
  // Initial adjacency: facets j and k share all vertices except simplex[j], simplex[k].
  for (int j = 0; j <= d; ++j) {
    for (int i = 0; i < d; ++i) {
      const int missing = work[j].verts[i];
      const int k = static_cast<int>(std::find(simplex.begin(), simplex.end(), missing) - simplex.begin());
      work[j].neighbors[i] = k;
    }
  }

  auto assign = [&](int p, const std::vector<int>& candidates) {
    for (int f : candidates) {
      const double dist = work[f].normal.dot(points_.col(p)) - work[f].offset;
      if (dist > eps) {
        work[f].outside.push_back(p);
        if (dist > work[f].furthest_dist) {
          work[f].furthest_dist = dist;
          work[f].furthest = p;
        }
        return;
      }
    }
  };

  {
    std::vector<int> all(d + 1);
    std::iota(all.begin(), all.end(), 0);
    std::vector<bool> in_simplex(m, false);
    for (int i : simplex) in_simplex[i] = true;
    for (int p = 0; p < m; ++p) {
      if (!in_simplex[p]) assign(p, all);
    }
  }

  int visit_stamp = 0;
  std::vector<int> pending;
  for (int f = 0; f <= d; ++f) pending.push_back(f);

  while (!pending.empty()) {
    const int f0 = pending.back();
    pending.pop_back();
    if (!work[f0].alive || work[f0].outside.empty()) continue;
    const int apex = work[f0].furthest;
    const Vec apex_pt = points_.col(apex);
    ++visit_stamp;

    // Visible region by flood fill.
    std::vector<int> visible{f0};
    work[f0].visit = visit_stamp;
    for (std::size_t q = 0; q < visible.size(); ++q) {
      for (int g : work[visible[q]].neighbors) {
        if (work[g].visit == visit_stamp) continue;
        const double dist = work[g].normal.dot(apex_pt) - work[g].offset;
        if (dist > eps) {
          work[g].visit = visit_stamp;
          visible.push_back(g);
        }
      }
    }
    auto is_visible = [&](int g) {
      return work[g].visit == visit_stamp &&
             work[g].normal.dot(apex_pt) - work[g].offset > eps;
    };

    // New facets over the horizon.
    std::vector<int> created;
    std::map<std::vector<int>, std::pair<int, int>> open_ridges;
    for (int f : visible) {
      for (int i = 0; i < d; ++i) {
        const int g = work[f].neighbors[i];
        if (is_visible(g)) continue;
        std::vector<int> verts;
        for (int k = 0; k < d; ++k) {
          if (k != i) verts.push_back(work[f].verts[k]);
        }
        verts.push_back(apex);
        const int nf = make_facet(verts);
        work[nf].neighbors[d - 1] = g;
        for (int& back : work[g].neighbors) {
          if (back == f) back = nf;
        }
        created.push_back(nf);
        for (int k = 0; k < d - 1; ++k) {
          std::vector<int> key;
          for (int t = 0; t < d - 1; ++t) {
            if (t != k) key.push_back(work[nf].verts[t]);
          }
          std::sort(key.begin(), key.end());
          auto it = open_ridges.find(key);
          if (it == open_ridges.end()) {
            open_ridges.emplace(std::move(key), std::make_pair(nf, k));
          } else {
            const auto [other, pos] = it->second;
            work[nf].neighbors[k] = other;
            work[other].neighbors[pos] = nf;
            open_ridges.erase(it);
          }
        }
      }
    }

    std::vector<int> orphans;
    for (int f : visible) {
      work[f].alive = false;
      for (int p : work[f].outside) {
        if (p != apex) orphans.push_back(p);
      }
      work[f].outside.clear();
    }
    for (int p : orphans) assign(p, created);
    for (int nf : created) {
      if (!work[nf].outside.empty()) pending.push_back(nf);
    }
  }

  const double fact = factorial(d);
  volume_ = 0.0;
  for (const WorkFacet& f : work) {
    if (!f.alive) continue;
    Mat e(d, d);
    for (int k = 0; k < d; ++k) e.col(k) = points_.col(f.verts[k]) - interior_;
    const double v = std::fabs(e.determinant()) / fact;
    facets_.push_back(Facet{f.verts, f.normal, f.offset});
    cone_volumes_.push_back(v);
    volume_ += v;
  }
}

std::vector<int> ConvexHull::vertex_indices() const {
  std::vector<int> out;
  for (const Facet& f : facets_) out.insert(out.end(), f.vertices.begin(), f.vertices.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double ConvexHull::radial(const Vec& theta) const {
  double r = std::numeric_limits<double>::infinity();
  for (const Facet& f : facets_) {
    const double s = f.normal.dot(theta);
    if (s > 0.0) r = std::min(r, f.offset / s);
  }
  return r;
}

double ConvexHull::support(const Vec& theta) const {
  double h = -std::numeric_limits<double>::infinity();
  for (int i : vertex_indices()) h = std::max(h, points_.col(i).dot(theta));
  return h;
}

bool ConvexHull::contains_origin_interior() const {
  for (const Facet& f : facets_) {
    if (!(f.offset > 0.0)) return false;
  }
  return true;
}

}  // namespace clab
