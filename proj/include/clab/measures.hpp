#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clab/estimate.hpp"
#include "clab/hull.hpp"
#include "clab/numerics.hpp"
#include "clab/subspace.hpp"

namespace clab::measures {

struct Node;

// Immutable, shared description of a log-concave probability measure.
class MeasureSpec {
 public:
  MeasureSpec() = default;

  static MeasureSpec gaussian(int dim);
  static MeasureSpec gaussian(const Mat& covariance);
  static MeasureSpec uniform_ball(int dim, double radius);
  static MeasureSpec uniform_cube(int dim, double halfwidth);
  // Uniform on conv{0, e_1, ..., e_n}.
  static MeasureSpec uniform_simplex(int dim);
  // Uniform on the convex hull of the columns of `vertices` (dim x m).
  static MeasureSpec uniform_polytope(const Mat& vertices);
  static MeasureSpec product(std::vector<MeasureSpec> parts);
  // Law of A X + b. Nested affine images are composed.
  static MeasureSpec affine(const MeasureSpec& base, const Mat& matrix,
                            const Vec& shift);
  // Weights are normalized; they must be positive.
  static MeasureSpec empirical(const Mat& points, const Vec& weights);
  static MeasureSpec empirical(const Mat& points);

  // Raw tilt node; use loglaplace::tilt, which normalizes and computes the
  // recentering data.
  static MeasureSpec make_tilt(const MeasureSpec& base, const Vec& xi,
                               const Vec& center, const Mat& covariance,
                               double log_partition);
  // Raw projection node (law of E X for a row basis E); use project().
  static MeasureSpec make_projection(const MeasureSpec& base, const Mat& basis);

  int dim() const;
  bool valid() const { return node_ != nullptr; }
  const Node& node() const { return *node_; }
  std::string kind() const;
  std::string describe() const;

 private:
  explicit MeasureSpec(std::shared_ptr<const Node> node)
      : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Gaussian {
  int dim = 0;
  Mat covariance;
  Mat cholesky;  // lower factor
  bool standard = true;
};
struct UniformBall {
  int dim = 0;
  double radius = 1.0;
};
struct UniformCube {
  int dim = 0;
  double halfwidth = 1.0;
};
struct UniformSimplex {
  int dim = 0;
};
struct UniformPolytope {
  std::shared_ptr<const ConvexHull> hull;
  std::vector<double> cumulative;  // normalized cone-volume CDF
};
struct Product {
  std::vector<MeasureSpec> parts;
  std::vector<int> offsets;
  int dim = 0;
};
struct AffineImage {
  MeasureSpec base;
  Mat matrix;
  Vec shift;
};
struct Projection {
  MeasureSpec base;
  Mat basis;  // k x n orthonormal rows
};
// Law of X - center where X has density proportional to e^{<xi,x>} d base.
struct Tilt {
  MeasureSpec base;
  Vec xi;
  Vec center;
  Mat covariance;
  double log_partition = 0.0;  // Lambda_base(xi)
};
struct Empirical {
  Mat points;  // dim x N
  Vec weights;
  std::vector<double> cumulative;
};

struct Node {
  std::variant<Gaussian, UniformBall, UniformCube, UniformSimplex,
               UniformPolytope, Product, AffineImage, Projection, Tilt,
               Empirical>
      v;
};

struct WeightedSample {
  Mat points;  // dim x N
  Vec weights;  // sum to 1
  std::uint64_t seed = 0;
  double effective_sample_size = 0.0;
  bool low_ess = false;

  int dim() const { return static_cast<int>(points.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
};

WeightedSample sample(const MeasureSpec& spec, std::size_t count,
                      std::uint64_t seed);

// Exact for every variant except Empirical, where it is the exact moment of
// the weighted point set.
Vec barycenter(const MeasureSpec& spec);
Mat covariance(const MeasureSpec& spec);
// E[X X^T].
Mat second_moment(const MeasureSpec& spec);

// Translate so the barycenter is at the origin (identity if already there).
MeasureSpec recenter(const MeasureSpec& spec);
MeasureSpec whiten(const MeasureSpec& spec);
MeasureSpec project(const MeasureSpec& spec, const Subspace& e);

// Supremum of the density. UnsupportedVariant for Empirical and for
// projections of non-Gaussian measures.
double density_sup(const MeasureSpec& spec);

// Support function of the closed support of the measure (infinite for
// Gaussians).
double support_of_support(const MeasureSpec& spec, const Vec& theta);
bool compactly_supported(const MeasureSpec& spec);

// Law of <X, v> in closed form: shift + scale * Z with Z from a standard
// family on [-1, 1] (or R for the Gaussian).
struct Marginal1D {
  enum class Kind { kPoint, kGaussian, kUniform, kBall, kTiltedUniform };
  Kind kind = Kind::kPoint;
  double scale = 0.0;
  double shift = 0.0;
  int ball_dim = 1;     // kBall: density of Z proportional to (1-z^2)^{(n-1)/2}
  double rate = 0.0;    // kTiltedUniform: density proportional to e^{rate z}

  double abs_moment(double p) const;
  double upper_tail(double t) const;  // P(shift + scale Z >= t)
};
std::optional<Marginal1D> marginal(const MeasureSpec& spec, const Vec& v);

// Measures whose one-dimensional marginals are all the same law up to scale:
// <X, v> has the law of sqrt(v^T M v) * Z.
struct Elliptical {
  Mat shape;
  Marginal1D::Kind kind = Marginal1D::Kind::kGaussian;
  int ball_dim = 1;

  double abs_moment_unit(double p) const;  // E|Z|^p
};
std::optional<Elliptical> elliptical(const MeasureSpec& spec);

// Evaluator over one fixed sample of the measure. Directional queries use
// the closed-form marginal when one exists and the cached sample otherwise.
class MeasureEvaluator {
 public:
  MeasureEvaluator(MeasureSpec spec, McConfig mc);

  const MeasureSpec& spec() const { return spec_; }
  const McConfig& mc() const { return mc_; }
  int dim() const { return spec_.dim(); }

  // E|<X, theta>|^p.
  Estimate moment(const Vec& theta, double p) const;
  // Value and gradient in theta of E|<X, theta>|^p.
  struct MomentGradient {
    Estimate value;
    Vec gradient;
  };
  MomentGradient moment_gradient(const Vec& theta, double p) const;
  Estimate halfspace_mass(const Vec& theta, double t) const;
  // E|X|^q.
  Estimate norm_moment(double q) const;

  bool analytic(const Vec& theta) const;
  const std::optional<Elliptical>& elliptical_form() const { return ell_; }
  const WeightedSample& cached_sample() const;

 private:
  MeasureSpec spec_;
  McConfig mc_;
  std::optional<Elliptical> ell_;
  Mat second_;
  mutable std::once_flag once_;
  mutable std::shared_ptr<WeightedSample> sample_;
};

Estimate directional_moment(const MeasureSpec& spec, const Vec& theta,
                            double p, const McConfig& mc = {});
Estimate halfspace_mass(const MeasureSpec& spec, const Vec& theta, double t,
                        const McConfig& mc = {});

}  // namespace clab::measures
