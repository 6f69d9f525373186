#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clab/estimate.hpp"
#include "clab/numerics.hpp"
#include "clab/subspace.hpp"

namespace clab::bodies {

// Convex body (or star body, for radial-only oracles) in R^n. Oracles are
// positively homogeneous: support(c u) = c support(u) and
// radial(c u) = radial(u) / c for c > 0, so callers may pass non-unit vectors.
class Body {
 public:
  virtual ~Body() = default;

  virtual int dim() const = 0;
  virtual bool symmetric() const = 0;
  virtual std::string describe() const = 0;

  virtual bool has_support() const { return false; }
  // Radial values can always be derived from a support oracle.
  virtual bool has_radial() const { return has_support(); }

  virtual Estimate support(const Vec& u) const;
  virtual Estimate radial(const Vec& u) const;

  // h(u) together with its gradient, which is the boundary point touching the
  // supporting hyperplane. nullopt where the body cannot provide it.
  struct SupportGradient {
    Estimate value;
    Vec gradient;
  };
  virtual std::optional<SupportGradient> support_gradient(const Vec& u) const;

  virtual std::optional<double> exact_volume_radius() const { return std::nullopt; }
};

using BodyHandle = std::shared_ptr<const Body>;

// Support-function body from closures; `gradient` may be empty.
struct SupportClosure {
  int dim = 0;
  bool symmetric = true;
  std::string name;
  std::function<Estimate(const Vec&)> support;
  std::function<std::optional<Body::SupportGradient>(const Vec&)> gradient;
};

BodyHandle make_ball(int dim, double radius = 1.0);
BodyHandle make_box(const Vec& halfwidths);
BodyHandle make_cube(int dim, double halfwidth = 1.0);
// conv of the columns; radial oracle only when full-dimensional with the
// origin in the interior.
BodyHandle make_polytope(const Mat& vertices);
BodyHandle make_symmetric_hull(const Mat& points);  // conv(P, -P)
BodyHandle make_support_body(SupportClosure closure);
BodyHandle scale(const BodyHandle& body, double factor);

struct DirectionNet {
  int dim = 0;
  std::size_t count = 0;
  std::string rule;  // "grid", "antithetic" or "pair"
  std::uint64_t seed = 0;
  Mat directions;  // dim x count
};

// Angular grid for n = 2, seeded antithetic pairs for n >= 3, {+1, -1} for
// n = 1.
DirectionNet make_net(int dim, std::size_t count, std::uint64_t seed);
// Uniform directions without antithetic pairing.
Mat uniform_directions(int dim, std::size_t count, std::uint64_t seed);

Estimate support(const Body& body, const Vec& theta);
Estimate radial(const Body& body, const Vec& theta);

// min h(u) over <u, theta> = 1, i.e. the radial function of the body.
Estimate radial_from_support(const Body& body, const Vec& theta);

BodyHandle polar(const BodyHandle& body);
BodyHandle project_body(const BodyHandle& body, const Subspace& e);

struct DiameterConfig {
  std::size_t net_size = 0;  // 0: chosen from the dimension
  int starts = 64;
  int max_iterations = 200;
  std::uint64_t seed = 0xd1a3ULL;
  std::vector<Vec> warm_starts;  // tried before the net starts
};

struct DiameterResult {
  Estimate value;        // best width found; a lower bound on diam
  Vec argmax;
  double net_value = 0.0;       // best width on the net alone
  double net_resolution = 0.0;  // chordal covering radius of the net
  double upper_bound = 0.0;     // net_value / (1 - net_resolution)
  bool converged = false;
};

DiameterResult diameter_search(const Body& body, const DiameterConfig& cfg = {});
Estimate diameter(const Body& body, const DiameterConfig& cfg = {});

struct SphereConfig {
  std::size_t directions = 0;  // 0: chosen from the dimension
  int batches = 16;
  std::uint64_t seed = 0x5beeULL;
};

// q = 1 gives the mean width W; W_q = (E h^q)^{1/q}.
Estimate mean_width(const Body& body, double q = 1.0, const SphereConfig& cfg = {});

// (E r^n)^{1/n} over the sphere.
Estimate vrad_radial(const Body& body, const SphereConfig& cfg = {});

// Exact volume radius of conv(points); points are dim x m.
double vrad_hull(const Mat& points);

Vec boundary_point(const Body& body, const Vec& theta);

Subspace sample_grassmann(int n, int k, std::uint64_t seed);

}  // namespace clab::bodies
