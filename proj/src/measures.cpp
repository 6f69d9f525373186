#include "clab/measures.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "clab/error.hpp"
#include "clab/rng.hpp"

namespace clab::measures {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

std::vector<double> cumulative_of(const Vec& masses) {
  std::vector<double> c(masses.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < masses.size(); ++i) {
    s += masses[i];
    c[i] = s;
  }
  for (double& x : c) x /= s;
  c.back() = 1.0;
  return c;
}

std::size_t pick(const std::vector<double>& cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

// Inverse CDF of the density proportional to e^{a z} on [-1, 1].
double tilted_unit(double a, double u) {
  if (std::fabs(a) < 1e-9) return 2.0 * u - 1.0;
  if (a > 0.0) return 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * a)) / a;
  return -1.0 + std::log((1.0 - u) + u * std::exp(2.0 * a)) / a;
}

void uniform_sphere(Rng& rng, double* out, int n) {
  double s = 0.0;
  do {
    s = 0.0;
    for (int i = 0; i < n; ++i) {
      out[i] = rng.normal();
      s += out[i] * out[i];
    }
  } while (s == 0.0);
  s = 1.0 / std::sqrt(s);
  for (int i = 0; i < n; ++i) out[i] *= s;
}

void draw(const MeasureSpec& spec, Rng& rng, double* out, double& logw);

void draw_tilt(const Tilt& t, Rng& rng, double* out, double& logw) {
  const int n = t.base.dim();
  const auto& base = t.base.node().v;
  if (const auto* cube = std::get_if<UniformCube>(&base)) {
    for (int i = 0; i < n; ++i) {
      out[i] = cube->halfwidth * tilted_unit(t.xi[i] * cube->halfwidth,
                                             rng.uniform());
    }
  } else if (const auto* ball = std::get_if<UniformBall>(&base)) {
    const double s = t.xi.norm();
    if (s == 0.0) {
      draw(t.base, rng, out, logw);
    } else {
      const double a = ball->radius * s;
      const double expo = 0.5 * (n - 1);
      double z = 0.0;
      for (;;) {
        z = tilted_unit(a, rng.uniform());
        if (n == 1 || rng.uniform() <= std::pow(1.0 - z * z, expo)) break;
      }
      Eigen::Map<Vec> x(out, n);
      const Vec u = t.xi / s;
      x = z * u;
      if (n > 1) {
        Vec w(n);
        double norm2 = 0.0;
        do {
          for (int i = 0; i < n; ++i) w[i] = rng.normal();
          w -= u.dot(w) * u;
          norm2 = w.squaredNorm();
        } while (norm2 < 1e-24);
        const double rho =
            std::sqrt(std::max(0.0, 1.0 - z * z)) *
            std::pow(rng.uniform(), 1.0 / (n - 1));
        x += rho / std::sqrt(norm2) * w;
      }
      x *= ball->radius;
    }
  } else {
    Eigen::Map<Vec> x(out, n);
    const bool bounded = std::holds_alternative<UniformSimplex>(base) ||
                         std::holds_alternative<UniformPolytope>(base);
    const double h = bounded ? support_of_support(t.base, t.xi) : 0.0;
    const double acceptance = std::exp(t.log_partition - h);
    if (bounded && acceptance >= 1e-3) {
      double lw = 0.0;
      for (;;) {
        draw(t.base, rng, out, lw);
        if (std::log(rng.uniform()) <= x.dot(t.xi) - h) break;
      }
    } else {
      draw(t.base, rng, out, logw);
      logw += x.dot(t.xi);
    }
  }
  for (int i = 0; i < n; ++i) out[i] -= t.center[i];
}

void draw(const MeasureSpec& spec, Rng& rng, double* out, double& logw) {
  std::visit(
      Overloaded{
          [&](const Gaussian& g) {
            Vec z(g.dim);
            for (int i = 0; i < g.dim; ++i) z[i] = rng.normal();
            Eigen::Map<Vec> x(out, g.dim);
            if (g.standard) {
              x = z;
            } else {
              x = g.cholesky.triangularView<Eigen::Lower>() * z;
            }
          },
          [&](const UniformBall& b) {
            uniform_sphere(rng, out, b.dim);
            const double r = b.radius * std::pow(rng.uniform(), 1.0 / b.dim);
            for (int i = 0; i < b.dim; ++i) out[i] *= r;
          },
          [&](const UniformCube& c) {
            for (int i = 0; i < c.dim; ++i) {
              out[i] = rng.uniform(-c.halfwidth, c.halfwidth);
            }
          },
          [&](const UniformSimplex& s) {
            double total = rng.exponential();
            for (int i = 0; i < s.dim; ++i) {
              out[i] = rng.exponential();
              total += out[i];
            }
            for (int i = 0; i < s.dim; ++i) out[i] /= total;
          },
          [&](const UniformPolytope& p) {
            const ConvexHull& hull = *p.hull;
            const int d = hull.dim();
            const auto& facet = hull.facets()[pick(p.cumulative, rng.uniform())];
            Eigen::Map<Vec> x(out, d);
            double total = rng.exponential();
            x = total * hull.interior_point();
            for (int k = 0; k < d; ++k) {
              const double e = rng.exponential();
              x += e * hull.points().col(facet.vertices[k]);
              total += e;
            }
            x /= total;
          },
          [&](const Product& p) {
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              draw(p.parts[j], rng, out + p.offsets[j], logw);
            }
          },
          [&](const AffineImage& a) {
            Vec y(a.base.dim());
            draw(a.base, rng, y.data(), logw);
            Eigen::Map<Vec>(out, a.matrix.rows()) = a.matrix * y + a.shift;
          },
          [&](const Projection& pr) {
            Vec y(pr.base.dim());
            draw(pr.base, rng, y.data(), logw);
            Eigen::Map<Vec>(out, pr.basis.rows()) = pr.basis * y;
          },
          [&](const Tilt& t) { draw_tilt(t, rng, out, logw); },
          [&](const Empirical& e) {
            const std::size_t i = pick(e.cumulative, rng.uniform());
            Eigen::Map<Vec>(out, e.points.rows()) = e.points.col(i);
          },
      },
      spec.node().v);
}

double log_factorial(int n) { return std::lgamma(n + 1.0); }

// E[X X^T] and E[X] of the simplex conv(columns of v).
Mat simplex_second_moment(const Mat& v) {
  const double n = static_cast<double>(v.cols() - 1);
  const Vec s = v.rowwise().sum();
  return (v * v.transpose() + s * s.transpose()) / ((n + 1.0) * (n + 2.0));
}

Mat cone_vertices(const ConvexHull& hull, const ConvexHull::Facet& f) {
  Mat v(hull.dim(), hull.dim() + 1);
  v.col(0) = hull.interior_point();
  for (int k = 0; k < hull.dim(); ++k) v.col(k + 1) = hull.points().col(f.vertices[k]);
  return v;
}

bool is_zero(const Vec& v) { return v.cwiseAbs().maxCoeff() == 0.0; }

double tilted_density(double a, double z) {
  if (std::fabs(a) < 1e-9) return 0.5;
  if (a > 0.0) return a * std::exp(a * (z - 1.0)) / -std::expm1(-2.0 * a);
  return -a * std::exp(a * (z + 1.0)) / -std::expm1(2.0 * a);
}

}  // namespace

// ---------------------------------------------------------------- builders

MeasureSpec MeasureSpec::gaussian(int dim) {
  require(dim >= 1, ErrorCode::kInvalidArgument, "dimension must be >= 1");
  Gaussian g;
  g.dim = dim;
  g.covariance = Mat::Identity(dim, dim);
  g.cholesky = g.covariance;
  g.standard = true;
  return MeasureSpec(std::make_shared<const Node>(Node{g}));
}

MeasureSpec MeasureSpec::gaussian(const Mat& covariance) {
  require(covariance.rows() == covariance.cols() && covariance.rows() >= 1,
          ErrorCode::kInvalidArgument, "covariance must be square");
  require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * (1.0 + covariance.cwiseAbs().maxCoeff()),
          ErrorCode::kInvalidArgument, "covariance must be symmetric");
  Eigen::LLT<Mat> llt(covariance);
  require(llt.info() == Eigen::Success, ErrorCode::kDegenerateSpec,
          "covariance is not positive definite");
  Gaussian g;
  g.dim = static_cast<int>(covariance.rows());
  g.covariance = 0.5 * (covariance + covariance.transpose());
  g.cholesky = llt.matrixL();
  g.standard = (g.covariance - Mat::Identity(g.dim, g.dim)).cwiseAbs().maxCoeff() == 0.0;
  return MeasureSpec(std::make_shared<const Node>(Node{g}));
}

MeasureSpec MeasureSpec::uniform_ball(int dim, double radius) {
  require(dim >= 1, ErrorCode::kInvalidArgument, "dimension must be >= 1");
  require(radius > 0.0 && std::isfinite(radius), ErrorCode::kDegenerateSpec,
          "radius must be positive");
  return MeasureSpec(std::make_shared<const Node>(Node{UniformBall{dim, radius}}));
}

MeasureSpec MeasureSpec::uniform_cube(int dim, double halfwidth) {
  require(dim >= 1, ErrorCode::kInvalidArgument, "dimension must be >= 1");
  require(halfwidth > 0.0 && std::isfinite(halfwidth), ErrorCode::kDegenerateSpec,
          "halfwidth must be positive");
  return MeasureSpec(
      std::make_shared<const Node>(Node{UniformCube{dim, halfwidth}}));
}

MeasureSpec MeasureSpec::uniform_simplex(int dim) {
  require(dim >= 1, ErrorCode::kInvalidArgument, "dimension must be >= 1");
  return MeasureSpec(std::make_shared<const Node>(Node{UniformSimplex{dim}}));
}

MeasureSpec MeasureSpec::uniform_polytope(const Mat& vertices) {
  std::shared_ptr<const ConvexHull> hull;
  try {
    hull = std::make_shared<const ConvexHull>(vertices);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDegenerateHull) {
      throw Error(ErrorCode::kDegenerateSpec, "polytope vertices are not full-dimensional");
    }
    throw;
  }
  UniformPolytope p;
  Vec masses(static_cast<Eigen::Index>(hull->cone_volumes().size()));
  for (Eigen::Index i = 0; i < masses.size(); ++i) masses[i] = hull->cone_volumes()[i];
  p.cumulative = cumulative_of(masses);
  p.hull = std::move(hull);
  return MeasureSpec(std::make_shared<const Node>(Node{std::move(p)}));
}

MeasureSpec MeasureSpec::product(std::vector<MeasureSpec> parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "empty product");
  Product p;
  for (const MeasureSpec& part : parts) {
    require(part.valid(), ErrorCode::kInvalidArgument, "invalid product part");
    if (const auto* inner = std::get_if<Product>(&part.node().v)) {
      for (const MeasureSpec& q : inner->parts) p.parts.push_back(q);
    } else {
      p.parts.push_back(part);
    }
  }
  if (p.parts.size() == 1) return p.parts.front();
  for (const MeasureSpec& part : p.parts) {
    p.offsets.push_back(p.dim);
    p.dim += part.dim();
  }
  return MeasureSpec(std::make_shared<const Node>(Node{std::move(p)}));
}

MeasureSpec MeasureSpec::affine(const MeasureSpec& base, const Mat& matrix,
                                const Vec& shift) {
  const int n = base.dim();
  require(matrix.rows() == n && matrix.cols() == n && shift.size() == n,
          ErrorCode::kInvalidArgument, "affine map must be dim x dim");
  require(matrix.allFinite() && shift.allFinite(), ErrorCode::kInvalidArgument,
          "affine map must be finite");
  Eigen::FullPivLU<Mat> lu(matrix);
  lu.setThreshold(1e-12);
  require(lu.rank() == n, ErrorCode::kDegenerateSpec, "affine matrix is rank-deficient");
  if (const auto* inner = std::get_if<AffineImage>(&base.node().v)) {
    return affine(inner->base, matrix * inner->matrix, matrix * inner->shift + shift);
  }
  return MeasureSpec(
      std::make_shared<const Node>(Node{AffineImage{base, matrix, shift}}));
}

MeasureSpec MeasureSpec::empirical(const Mat& points, const Vec& weights) {
  require(points.cols() >= 1 && points.rows() >= 1, ErrorCode::kInvalidArgument,
          "empty point set");
  require(weights.size() == points.cols(), ErrorCode::kInvalidArgument,
          "weights must match the number of points");
  require(points.allFinite(), ErrorCode::kInvalidArgument, "points must be finite");
  require(weights.minCoeff() > 0.0 && weights.allFinite(), ErrorCode::kInvalidArgument,
          "weights must be positive");
  Empirical e;
  e.points = points;
  e.weights = weights / weights.sum();
  e.cumulative = cumulative_of(e.weights);
  return MeasureSpec(std::make_shared<const Node>(Node{std::move(e)}));
}

MeasureSpec MeasureSpec::empirical(const Mat& points) {
  return empirical(points, Vec::Ones(points.cols()));
}

MeasureSpec MeasureSpec::make_tilt(const MeasureSpec& base, const Vec& xi,
                                   const Vec& center, const Mat& covariance,
                                   double log_partition) {
  require(xi.size() == base.dim() && center.size() == base.dim(),
          ErrorCode::kInvalidArgument, "tilt dimension mismatch");
  return MeasureSpec(std::make_shared<const Node>(
      Node{Tilt{base, xi, center, covariance, log_partition}}));
}

MeasureSpec MeasureSpec::make_projection(const MeasureSpec& base, const Mat& basis) {
  require(basis.cols() == base.dim(), ErrorCode::kInvalidArgument,
          "projection basis dimension mismatch");
  if (const auto* inner = std::get_if<Projection>(&base.node().v)) {
    return make_projection(inner->base, basis * inner->basis);
  }
  return MeasureSpec(std::make_shared<const Node>(Node{Projection{base, basis}}));
}

int MeasureSpec::dim() const {
  if (!node_) return 0;
  return std::visit(
      Overloaded{
          [](const Gaussian& g) { return g.dim; },
          [](const UniformBall& b) { return b.dim; },
          [](const UniformCube& c) { return c.dim; },
          [](const UniformSimplex& s) { return s.dim; },
          [](const UniformPolytope& p) { return p.hull->dim(); },
          [](const Product& p) { return p.dim; },
          [](const AffineImage& a) { return static_cast<int>(a.matrix.rows()); },
          [](const Projection& p) { return static_cast<int>(p.basis.rows()); },
          [](const Tilt& t) { return t.base.dim(); },
          [](const Empirical& e) { return static_cast<int>(e.points.rows()); },
      },
      node_->v);
}

std::string MeasureSpec::kind() const {
  static const char* kNames[] = {"gaussian",         "uniform_ball",
                                 "uniform_cube",     "uniform_simplex",
                                 "uniform_polytope", "product",
                                 "affine",           "projection",
                                 "tilt",             "empirical"};
  return node_ ? kNames[node_->v.index()] : "invalid";
}

std::string MeasureSpec::describe() const {
  if (!node_) return "invalid";
  std::ostringstream os;
  std::visit(
      Overloaded{
          [&](const Gaussian& g) {
            os << "gaussian" << g.dim;
            if (!g.standard) os << "[cov]";
          },
          [&](const UniformBall& b) { os << "ball" << b.dim << "(r=" << b.radius << ")"; },
          [&](const UniformCube& c) {
            os << "cube" << c.dim << "(hw=" << c.halfwidth << ")";
          },
          [&](const UniformSimplex& s) { os << "simplex" << s.dim; },
          [&](const UniformPolytope& p) {
            os << "polytope" << p.hull->dim() << "(v=" << p.hull->vertex_indices().size()
               << ")";
          },
          [&](const Product& p) {
            os << "product(";
            for (std::size_t i = 0; i < p.parts.size(); ++i) {
              os << (i ? "x" : "") << p.parts[i].describe();
            }
            os << ")";
          },
          [&](const AffineImage& a) { os << "affine(" << a.base.describe() << ")"; },
          [&](const Projection& p) {
            os << "proj" << p.basis.rows() << "(" << p.base.describe() << ")";
          },
          [&](const Tilt& t) {
            os << "tilt(" << t.base.describe() << ",|xi|=" << t.xi.norm() << ")";
          },
          [&](const Empirical& e) {
            os << "empirical" << e.points.rows() << "(N=" << e.points.cols() << ")";
          },
      },
      node_->v);
  return os.str();
}

// ---------------------------------------------------------------- sampling

WeightedSample sample(const MeasureSpec& spec, std::size_t count,
                      std::uint64_t seed) {
  require(count >= 1, ErrorCode::kInvalidArgument, "sample count must be >= 1");
  require(spec.valid(), ErrorCode::kInvalidArgument, "invalid spec");
  const int n = spec.dim();
  WeightedSample out;
  out.points.resize(n, static_cast<Eigen::Index>(count));
  Vec logw = Vec::Zero(static_cast<Eigen::Index>(count));
  const std::size_t chunks = (count + kChunkSize - 1) / kChunkSize;
  for (std::size_t c = 0; c < chunks; ++c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t hi = std::min(count, (c + 1) * kChunkSize);
    for (std::size_t i = c * kChunkSize; i < hi; ++i) {
      double lw = 0.0;
      draw(spec, rng, out.points.col(static_cast<Eigen::Index>(i)).data(), lw);
      logw[static_cast<Eigen::Index>(i)] = lw;
    }
  }
  const double top = logw.maxCoeff();
  out.weights = (logw.array() - top).exp().matrix();
  out.weights /= out.weights.sum();
  out.seed = seed;
  out.effective_sample_size = 1.0 / out.weights.squaredNorm();
  out.low_ess = out.effective_sample_size < static_cast<double>(count) / 4.0;
  return out;
}

// ---------------------------------------------------------------- moments

Vec barycenter(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Gaussian& g) -> Vec { return Vec::Zero(g.dim); },
          [](const UniformBall& b) -> Vec { return Vec::Zero(b.dim); },
          [](const UniformCube& c) -> Vec { return Vec::Zero(c.dim); },
          [](const UniformSimplex& s) -> Vec {
            return Vec::Constant(s.dim, 1.0 / (s.dim + 1.0));
          },
          [](const UniformPolytope& p) -> Vec {
            const ConvexHull& hull = *p.hull;
            Vec m = Vec::Zero(hull.dim());
            for (std::size_t f = 0; f < hull.facets().size(); ++f) {
              const Mat v = cone_vertices(hull, hull.facets()[f]);
              m += hull.cone_volumes()[f] * v.rowwise().mean();
            }
            return m / hull.volume();
          },
          [](const Product& p) -> Vec {
            Vec m(p.dim);
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              m.segment(p.offsets[j], p.parts[j].dim()) = barycenter(p.parts[j]);
            }
            return m;
          },
          [](const AffineImage& a) -> Vec {
            return a.matrix * barycenter(a.base) + a.shift;
          },
          [](const Projection& p) -> Vec { return p.basis * barycenter(p.base); },
          [](const Tilt& t) -> Vec { return Vec::Zero(t.xi.size()); },
          [](const Empirical& e) -> Vec { return e.points * e.weights; },
      },
      spec.node().v);
}

Mat second_moment(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Gaussian& g) -> Mat { return g.covariance; },
          [](const UniformBall& b) -> Mat {
            return Mat::Identity(b.dim, b.dim) * (b.radius * b.radius / (b.dim + 2.0));
          },
          [](const UniformCube& c) -> Mat {
            return Mat::Identity(c.dim, c.dim) * (c.halfwidth * c.halfwidth / 3.0);
          },
          [](const UniformSimplex& s) -> Mat {
            const double n = s.dim;
            Mat m = Mat::Constant(s.dim, s.dim, 1.0 / ((n + 1.0) * (n + 2.0)));
            m.diagonal() *= 2.0;
            return m;
          },
          [](const UniformPolytope& p) -> Mat {
            const ConvexHull& hull = *p.hull;
            Mat m = Mat::Zero(hull.dim(), hull.dim());
            for (std::size_t f = 0; f < hull.facets().size(); ++f) {
              m += hull.cone_volumes()[f] *
                   simplex_second_moment(cone_vertices(hull, hull.facets()[f]));
            }
            return m / hull.volume();
          },
          [](const Product& p) -> Mat {
            Mat m(p.dim, p.dim);
            std::vector<Vec> means;
            for (const MeasureSpec& part : p.parts) means.push_back(barycenter(part));
            for (std::size_t i = 0; i < p.parts.size(); ++i) {
              for (std::size_t j = 0; j < p.parts.size(); ++j) {
                m.block(p.offsets[i], p.offsets[j], p.parts[i].dim(), p.parts[j].dim()) =
                    i == j ? second_moment(p.parts[i])
                           : Mat(means[i] * means[j].transpose());
              }
            }
            return m;
          },
          [](const AffineImage& a) -> Mat {
            const Vec mb = barycenter(a.base);
            const Mat s = a.matrix * second_moment(a.base) * a.matrix.transpose();
            const Vec am = a.matrix * mb;
            return s + am * a.shift.transpose() + a.shift * am.transpose() +
                   a.shift * a.shift.transpose();
          },
          [](const Projection& p) -> Mat {
            return p.basis * second_moment(p.base) * p.basis.transpose();
          },
          [](const Tilt& t) -> Mat { return t.covariance; },
          [](const Empirical& e) -> Mat {
            return e.points * e.weights.asDiagonal() * e.points.transpose();
          },
      },
      spec.node().v);
}

Mat covariance(const MeasureSpec& spec) {
  const Vec m = barycenter(spec);
  Mat c = second_moment(spec) - m * m.transpose();
  return 0.5 * (c + c.transpose());
}

MeasureSpec recenter(const MeasureSpec& spec) {
  const Vec m = barycenter(spec);
  if (m.cwiseAbs().maxCoeff() == 0.0) return spec;
  const int n = spec.dim();
  return MeasureSpec::affine(spec, Mat::Identity(n, n), -m);
}

MeasureSpec whiten(const MeasureSpec& spec) {
  const int n = spec.dim();
  const Vec m = barycenter(spec);
  const Mat c = covariance(spec);
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  require(es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()),
          ErrorCode::kSingularCovariance, "covariance is not positive definite");
  const Mat w = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                es.eigenvectors().transpose();
  const Mat wsym = 0.5 * (w + w.transpose());
  const bool identity = (c - Mat::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-14;
  if (identity && m.cwiseAbs().maxCoeff() <= 1e-15) return spec;
  if (identity) return MeasureSpec::affine(spec, Mat::Identity(n, n), -m);
  return MeasureSpec::affine(spec, wsym, -wsym * m);
}

MeasureSpec project(const MeasureSpec& spec, const Subspace& e) {
  require(e.ambient == spec.dim() && e.basis.cols() == spec.dim(),
          ErrorCode::kInvalidArgument, "subspace ambient dimension mismatch");
  require(numerics::orthonormality_defect(e.basis) <= 1e-12,
          ErrorCode::kNonOrthonormalBasis, "subspace basis is not orthonormal");
  const int k = e.dim();
  const int n = spec.dim();
  if (k == n) {
    return MeasureSpec::affine(spec, e.basis, Vec::Zero(n));
  }
  const auto& v = spec.node().v;
  if (const auto* g = std::get_if<Gaussian>(&v)) {
    return MeasureSpec::gaussian(Mat(e.basis * g->covariance * e.basis.transpose()));
  }
  if (const auto* a = std::get_if<AffineImage>(&v)) {
    if (const auto* g = std::get_if<Gaussian>(&a->base.node().v)) {
      const Mat m = e.basis * a->matrix;
      const MeasureSpec proj = MeasureSpec::gaussian(Mat(m * g->covariance * m.transpose()));
      const Vec shift = e.basis * a->shift;
      if (shift.cwiseAbs().maxCoeff() == 0.0) return proj;
      return MeasureSpec::affine(proj, Mat::Identity(k, k), shift);
    }
  }
  if (const auto* emp = std::get_if<Empirical>(&v)) {
    return MeasureSpec::empirical(Mat(e.basis * emp->points), emp->weights);
  }
  return MeasureSpec::make_projection(spec, e.basis);
}

// ---------------------------------------------------------------- density

double density_sup(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Gaussian& g) {
            const double logdet = 2.0 * g.cholesky.diagonal().array().log().sum();
            return std::exp(-0.5 * g.dim * std::log(2.0 * std::numbers::pi) -
                            0.5 * logdet);
          },
          [](const UniformBall& b) {
            return std::exp(-numerics::log_unit_ball_volume(b.dim) -
                            b.dim * std::log(b.radius));
          },
          [](const UniformCube& c) { return std::pow(2.0 * c.halfwidth, -c.dim); },
          [](const UniformSimplex& s) { return std::exp(log_factorial(s.dim)); },
          [](const UniformPolytope& p) { return 1.0 / p.hull->volume(); },
          [](const Product& p) {
            double d = 1.0;
            for (const MeasureSpec& part : p.parts) d *= density_sup(part);
            return d;
          },
          [](const AffineImage& a) {
            return density_sup(a.base) / std::fabs(a.matrix.determinant());
          },
          [](const Projection&) -> double {
            throw Error(ErrorCode::kUnsupportedVariant,
                        "density of a non-Gaussian marginal is not available");
          },
          [](const Tilt& t) -> double {
            const auto& b = t.base.node().v;
            const bool uniform = std::holds_alternative<UniformBall>(b) ||
                                 std::holds_alternative<UniformCube>(b) ||
                                 std::holds_alternative<UniformSimplex>(b) ||
                                 std::holds_alternative<UniformPolytope>(b);
            if (!uniform) {
              throw Error(ErrorCode::kUnsupportedVariant,
                          "density of this tilt is not available");
            }
            return density_sup(t.base) *
                   std::exp(support_of_support(t.base, t.xi) - t.log_partition);
          },
          [](const Empirical&) -> double {
            throw Error(ErrorCode::kUnsupportedVariant, "empirical measures have no density");
          },
      },
      spec.node().v);
}

double support_of_support(const MeasureSpec& spec, const Vec& theta) {
  return std::visit(
      Overloaded{
          [&](const Gaussian&) {
            return is_zero(theta) ? 0.0 : std::numeric_limits<double>::infinity();
          },
          [&](const UniformBall& b) { return b.radius * theta.norm(); },
          [&](const UniformCube& c) { return c.halfwidth * theta.lpNorm<1>(); },
          [&](const UniformSimplex&) { return std::max(0.0, theta.maxCoeff()); },
          [&](const UniformPolytope& p) { return p.hull->support(theta); },
          [&](const Product& p) {
            double h = 0.0;
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              h += support_of_support(p.parts[j],
                                      theta.segment(p.offsets[j], p.parts[j].dim()));
            }
            return h;
          },
          [&](const AffineImage& a) {
            return support_of_support(a.base, a.matrix.transpose() * theta) +
                   a.shift.dot(theta);
          },
          [&](const Projection& p) {
            return support_of_support(p.base, p.basis.transpose() * theta);
          },
          [&](const Tilt& t) {
            return support_of_support(t.base, theta) - t.center.dot(theta);
          },
          [&](const Empirical& e) { return (e.points.transpose() * theta).maxCoeff(); },
      },
      spec.node().v);
}

bool compactly_supported(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Gaussian&) { return false; },
          [](const Product& p) {
            return std::all_of(p.parts.begin(), p.parts.end(),
                               [](const MeasureSpec& s) { return compactly_supported(s); });
          },
          [](const AffineImage& a) { return compactly_supported(a.base); },
          [](const Projection& p) { return compactly_supported(p.base); },
          [](const Tilt& t) { return compactly_supported(t.base); },
          [](const auto&) { return true; },
      },
      spec.node().v);
}

// ---------------------------------------------------------------- marginals

double Marginal1D::abs_moment(double p) const {
  if (kind == Kind::kPoint || scale == 0.0) return numerics::abs_pow(shift, p);
  const bool centered = std::fabs(shift) <= 1e-14 * scale;
  if (centered) {
    const double sp = std::pow(scale, p);
    switch (kind) {
      case Kind::kGaussian: return sp * numerics::gaussian_abs_moment(p);
      case Kind::kUniform: return sp / (p + 1.0);
      case Kind::kBall: return sp * numerics::ball_marginal_abs_moment(ball_dim, p);
      default: break;
    }
  }
  const double kink = -shift / scale;
  auto value = [&](double z) { return numerics::abs_pow(shift + scale * z, p); };
  if (kind == Kind::kGaussian) {
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    auto f = [&](double z) { return value(z) * c * std::exp(-0.5 * z * z); };
    const double lo = std::min(-40.0, kink - 40.0);
    const double hi = std::max(40.0, kink + 40.0);
    return numerics::integrate(f, lo, kink) + numerics::integrate(f, kink, hi);
  }
  std::function<double(double)> density;
  bool singular = false;
  switch (kind) {
    case Kind::kUniform: density = [](double) { return 0.5; }; break;
    case Kind::kBall: {
      const double norm = numerics::ball_marginal_norm(ball_dim);
      const double e = 0.5 * (ball_dim - 1);
      density = [norm, e](double z) { return std::pow(std::max(0.0, 1.0 - z * z), e) / norm; };
      singular = ball_dim % 2 == 0;
      break;
    }
    default: {
      const double a = rate;
      density = [a](double z) { return tilted_density(a, z); };
      break;
    }
  }
  auto f = [&](double z) { return value(z) * density(z); };
  auto integ = [&](double a, double b) {
    return singular ? numerics::integrate_endpoint_singular(f, a, b)
                    : numerics::integrate(f, a, b);
  };
  if (kink > -1.0 && kink < 1.0) return integ(-1.0, kink) + integ(kink, 1.0);
  return integ(-1.0, 1.0);
}

double Marginal1D::upper_tail(double t) const {
  if (kind == Kind::kPoint || scale == 0.0) return shift >= t ? 1.0 : 0.0;
  const double z = (t - shift) / scale;
  switch (kind) {
    case Kind::kGaussian: return 0.5 * std::erfc(z / std::numbers::sqrt2);
    case Kind::kUniform: return std::clamp(0.5 * (1.0 - z), 0.0, 1.0);
    case Kind::kBall: {
      if (z >= 1.0) return 0.0;
      if (z <= -1.0) return 1.0;
      const double tail =
          0.5 * boost::math::ibeta(0.5 * (ball_dim + 1.0), 0.5, 1.0 - z * z);
      return z >= 0.0 ? tail : 1.0 - tail;
    }
    case Kind::kTiltedUniform: {
      if (z >= 1.0) return 0.0;
      if (z <= -1.0) return 1.0;
      const double a = rate;
      if (std::fabs(a) < 1e-9) return 0.5 * (1.0 - z);
      if (a > 0.0) return -std::expm1(a * (z - 1.0)) / -std::expm1(-2.0 * a);
      const double b = -a;
      return (std::exp(-b * (z + 1.0)) - std::exp(-2.0 * b)) / -std::expm1(-2.0 * b);
    }
    default: return 0.0;
  }
}

std::optional<Marginal1D> marginal(const MeasureSpec& spec, const Vec& v) {
  using K = Marginal1D::Kind;
  return std::visit(
      Overloaded{
          [&](const Gaussian& g) -> std::optional<Marginal1D> {
            Marginal1D m;
            m.kind = K::kGaussian;
            m.scale = std::sqrt(std::max(0.0, v.dot(g.covariance * v)));
            return m;
          },
          [&](const UniformBall& b) -> std::optional<Marginal1D> {
            Marginal1D m;
            m.kind = K::kBall;
            m.scale = b.radius * v.norm();
            m.ball_dim = b.dim;
            return m;
          },
          [&](const UniformCube& c) -> std::optional<Marginal1D> {
            int active = -1;
            for (int i = 0; i < c.dim; ++i) {
              if (v[i] != 0.0) {
                if (active >= 0) return std::nullopt;
                active = i;
              }
            }
            Marginal1D m;
            if (active < 0) return m;
            m.kind = K::kUniform;
            m.scale = c.halfwidth * std::fabs(v[active]);
            return m;
          },
          [&](const UniformSimplex& s) -> std::optional<Marginal1D> {
            if (s.dim != 1) return std::nullopt;
            Marginal1D m;
            m.kind = K::kUniform;
            m.scale = 0.5 * std::fabs(v[0]);
            m.shift = 0.5 * v[0];
            return m;
          },
          [&](const UniformPolytope& p) -> std::optional<Marginal1D> {
            if (p.hull->dim() != 1) return std::nullopt;
            const double hi = p.hull->support(v);
            const double lo = -p.hull->support(-v);
            Marginal1D m;
            m.kind = K::kUniform;
            m.scale = 0.5 * (hi - lo);
            m.shift = 0.5 * (hi + lo);
            return m;
          },
          [&](const Product& p) -> std::optional<Marginal1D> {
            std::vector<Marginal1D> active;
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              const Vec sub = v.segment(p.offsets[j], p.parts[j].dim());
              if (is_zero(sub)) continue;
              auto m = marginal(p.parts[j], sub);
              if (!m) return std::nullopt;
              active.push_back(*m);
            }
            if (active.empty()) return Marginal1D{};
            if (active.size() == 1) return active.front();
            Marginal1D sum;
            sum.kind = K::kGaussian;
            double var = 0.0;
            for (const Marginal1D& m : active) {
              if (m.kind == K::kPoint) {
                sum.shift += m.shift;
                continue;
              }
              if (m.kind != K::kGaussian) return std::nullopt;
              var += m.scale * m.scale;
              sum.shift += m.shift;
            }
            sum.scale = std::sqrt(var);
            return sum;
          },
          [&](const AffineImage& a) -> std::optional<Marginal1D> {
            auto m = marginal(a.base, a.matrix.transpose() * v);
            if (m) m->shift += a.shift.dot(v);
            return m;
          },
          [&](const Projection& p) -> std::optional<Marginal1D> {
            return marginal(p.base, p.basis.transpose() * v);
          },
          [&](const Tilt& t) -> std::optional<Marginal1D> {
            const auto* c = std::get_if<UniformCube>(&t.base.node().v);
            if (!c) return std::nullopt;
            int active = -1;
            for (int i = 0; i < c->dim; ++i) {
              if (v[i] != 0.0) {
                if (active >= 0) return std::nullopt;
                active = i;
              }
            }
            Marginal1D m;
            if (active < 0) return m;
            const double vj = v[active];
            m.kind = K::kTiltedUniform;
            m.scale = c->halfwidth * std::fabs(vj);
            m.rate = (vj > 0.0 ? 1.0 : -1.0) * t.xi[active] * c->halfwidth;
            m.shift = -vj * t.center[active];
            return m;
          },
          [&](const Empirical&) -> std::optional<Marginal1D> { return std::nullopt; },
      },
      spec.node().v);
}

double Elliptical::abs_moment_unit(double p) const {
  return kind == Marginal1D::Kind::kBall ? numerics::ball_marginal_abs_moment(ball_dim, p)
                                         : numerics::gaussian_abs_moment(p);
}

std::optional<Elliptical> elliptical(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Gaussian& g) -> std::optional<Elliptical> {
            return Elliptical{g.covariance, Marginal1D::Kind::kGaussian, 1};
          },
          [](const UniformBall& b) -> std::optional<Elliptical> {
            return Elliptical{Mat::Identity(b.dim, b.dim) * (b.radius * b.radius),
                              Marginal1D::Kind::kBall, b.dim};
          },
          [](const AffineImage& a) -> std::optional<Elliptical> {
            if (a.shift.cwiseAbs().maxCoeff() != 0.0) return std::nullopt;
            auto e = elliptical(a.base);
            if (e) e->shape = a.matrix * e->shape * a.matrix.transpose();
            return e;
          },
          [](const Projection& p) -> std::optional<Elliptical> {
            auto e = elliptical(p.base);
            if (e) e->shape = p.basis * e->shape * p.basis.transpose();
            return e;
          },
          [](const Product& p) -> std::optional<Elliptical> {
            Elliptical out{Mat::Zero(p.dim, p.dim), Marginal1D::Kind::kGaussian, 1};
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              auto e = elliptical(p.parts[j]);
              if (!e || e->kind != Marginal1D::Kind::kGaussian) return std::nullopt;
              out.shape.block(p.offsets[j], p.offsets[j], p.parts[j].dim(),
                              p.parts[j].dim()) = e->shape;
            }
            return out;
          },
          [](const auto&) -> std::optional<Elliptical> { return std::nullopt; },
      },
      spec.node().v);
}

// ---------------------------------------------------------------- evaluator

MeasureEvaluator::MeasureEvaluator(MeasureSpec spec, McConfig mc)
    : spec_(std::move(spec)), mc_(mc) {
  require(spec_.valid(), ErrorCode::kInvalidArgument, "invalid spec");
  require(mc_.samples >= static_cast<std::size_t>(std::max(1, mc_.batches)),
          ErrorCode::kInvalidArgument, "samples must be >= batches");
  ell_ = elliptical(spec_);
  second_ = second_moment(spec_);
}

const WeightedSample& MeasureEvaluator::cached_sample() const {
  std::call_once(once_, [this] {
    sample_ = std::make_shared<WeightedSample>(sample(spec_, mc_.samples, mc_.seed));
  });
  return *sample_;
}

bool MeasureEvaluator::analytic(const Vec& theta) const {
  return ell_.has_value() || marginal(spec_, theta).has_value();
}

Estimate MeasureEvaluator::moment(const Vec& theta, double p) const {
  require(p > 0.0, ErrorCode::kInvalidArgument, "moment order must be positive");
  if (ell_) {
    const double s2 = std::max(0.0, theta.dot(ell_->shape * theta));
    return Estimate::exact(std::pow(s2, 0.5 * p) * ell_->abs_moment_unit(p));
  }
  if (p == 2.0) return Estimate::exact(theta.dot(second_ * theta));
  if (auto m = marginal(spec_, theta)) return Estimate::exact(m->abs_moment(p));
  return moment_gradient(theta, p).value;
}

MeasureEvaluator::MomentGradient MeasureEvaluator::moment_gradient(const Vec& theta,
                                                                   double p) const {
  MomentGradient out;
  if (ell_) {
    const Vec mt = ell_->shape * theta;
    const double s2 = std::max(0.0, theta.dot(mt));
    const double c = ell_->abs_moment_unit(p);
    out.value = Estimate::exact(std::pow(s2, 0.5 * p) * c);
    out.gradient = s2 > 0.0 ? Vec(c * p * std::pow(s2, 0.5 * p - 1.0) * mt)
                            : Vec::Zero(theta.size());
    return out;
  }
  if (p == 2.0) {
    const Vec mt = second_ * theta;
    out.value = Estimate::exact(theta.dot(mt));
    out.gradient = 2.0 * mt;
    return out;
  }
  const WeightedSample& s = cached_sample();
  const Vec t = s.points.transpose() * theta;
  const Eigen::Index n = t.size();
  std::vector<double> values(static_cast<std::size_t>(n));
  Vec coeff(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = std::fabs(t[i]);
    const double ap = numerics::abs_pow(a, p);
    values[static_cast<std::size_t>(i)] = ap;
    const double d = a > 0.0 ? p * ap / a : 0.0;
    coeff[i] = s.weights[i] * (t[i] >= 0.0 ? d : -d);
  }
  out.value = batch_mean(values, std::span<const double>(s.weights.data(), n), mc_.batches,
                         s.seed);
  out.value.flagged = s.low_ess;
  out.gradient = s.points * coeff;
  return out;
}

Estimate MeasureEvaluator::halfspace_mass(const Vec& theta, double t) const {
  if (auto m = marginal(spec_, theta)) return Estimate::exact(m->upper_tail(t));
  const WeightedSample& s = cached_sample();
  const Vec proj = s.points.transpose() * theta;
  std::vector<double> values(static_cast<std::size_t>(proj.size()));
  for (Eigen::Index i = 0; i < proj.size(); ++i) {
    values[static_cast<std::size_t>(i)] = proj[i] >= t ? 1.0 : 0.0;
  }
  Estimate e = batch_mean(values, std::span<const double>(s.weights.data(), proj.size()),
                          mc_.batches, s.seed);
  e.flagged = s.low_ess;
  return e;
}

Estimate MeasureEvaluator::norm_moment(double q) const {
  const auto& v = spec_.node().v;
  const int n = dim();
  if (const auto* g = std::get_if<Gaussian>(&v)) {
    const double s2 = g->covariance(0, 0);
    if ((g->covariance - s2 * Mat::Identity(n, n)).cwiseAbs().maxCoeff() == 0.0) {
      return Estimate::exact(std::exp(0.5 * q * std::log(2.0 * s2) +
                                      std::lgamma(0.5 * (n + q)) - std::lgamma(0.5 * n)));
    }
  }
  if (const auto* b = std::get_if<UniformBall>(&v)) {
    return Estimate::exact(std::pow(b->radius, q) * n / (n + q));
  }
  if (q == 2.0) return Estimate::exact(second_.trace());
  const WeightedSample& s = cached_sample();
  std::vector<double> values(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    values[i] = numerics::abs_pow(s.points.col(static_cast<Eigen::Index>(i)).norm(), q);
  }
  Estimate e = batch_mean(values, std::span<const double>(s.weights.data(), s.size()),
                          mc_.batches, s.seed);
  e.flagged = s.low_ess;
  return e;
}

Estimate directional_moment(const MeasureSpec& spec, const Vec& theta, double p,
                            const McConfig& mc) {
  require(p >= 1.0, ErrorCode::kInvalidArgument, "p must be >= 1");
  require(std::fabs(theta.norm() - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "theta must be a unit vector");
  return MeasureEvaluator(spec, mc).moment(theta, p);
}

Estimate halfspace_mass(const MeasureSpec& spec, const Vec& theta, double t,
                        const McConfig& mc) {
  require(std::fabs(theta.norm() - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "theta must be a unit vector");
  return MeasureEvaluator(spec, mc).halfspace_mass(theta, t);
}

}  // namespace clab::measures
