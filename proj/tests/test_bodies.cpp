#include <doctest.h>

#include <cmath>
#include <numbers>

#include "clab/bodies.hpp"
#include "clab/error.hpp"
#include "clab/rng.hpp"
#include "oracles.hpp"

using namespace clab;
using namespace clab::bodies;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat cube_vertices(int d) {
  Mat v(d, 1 << d);
  for (int m = 0; m < (1 << d); ++m)
    for (int i = 0; i < d; ++i) v(i, m) = (m >> i & 1) ? 1.0 : -1.0;
  return v;
}

}  // namespace

TEST_CASE("support and radial of balls and cubes") {
  const auto b = make_ball(4);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    Vec th(4);
    for (int k = 0; k < 4; ++k) th[k] = rng.normal();
    th.normalize();
    CHECK(support(*b, th).value == doctest::Approx(1.0));
    CHECK(radial(*b, th).value == doctest::Approx(1.0));
  }
  const double s = std::sqrt(2.0 * 3.0);
  CHECK(radial(*scale(b, s), Vec::Unit(4, 2)).value == doctest::Approx(s));
  const auto cube = make_cube(2);
  const Vec diag = vec2(1, 1).normalized();
  double brute = -1.0;
  const Mat v = cube_vertices(2);
  for (int j = 0; j < 4; ++j) brute = std::max(brute, v.col(j).dot(diag));
  CHECK(support(*cube, diag).value == doctest::Approx(brute).epsilon(1e-15));
  CHECK(brute == doctest::Approx(std::sqrt(2.0)));
  CHECK(radial(*cube, vec2(1, 0)).value == doctest::Approx(1.0));
}

TEST_CASE("symmetric hull of a segment") {
  Mat seg(1, 2);
  seg << 0.0, 1.0;
  const auto k = make_symmetric_hull(seg);
  CHECK(k->symmetric());
  Vec one(1);
  one << 1.0;
  CHECK(support(*k, one).value == 1.0);
}

TEST_CASE("radial function derived from a support oracle") {
  // Square as a generic support body: the radial function must come out of
  // the minimization.
  SupportClosure c;
  c.dim = 2;
  c.name = "square";
  c.support = [](const Vec& u) { return Estimate::exact(u.cwiseAbs().sum()); };
  const auto sq = make_support_body(c);
  CHECK(radial(*sq, vec2(1, 0)).value == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(radial(*sq, vec2(1, 1).normalized()).value ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
  // Ellipse with semi-axes (2, 1), smooth with gradient.
  SupportClosure e;
  e.dim = 2;
  e.name = "ellipse";
  e.support = [](const Vec& u) { return Estimate::exact(std::hypot(2 * u[0], u[1])); };
  e.gradient = [](const Vec& u) {
    const double h = std::hypot(2 * u[0], u[1]);
    return Body::SupportGradient{Estimate::exact(h), vec2(4 * u[0] / h, u[1] / h)};
  };
  const auto el = make_support_body(e);
  for (double a : {0.0, 0.3, 1.1, 2.0}) {
    const Vec th = vec2(std::cos(a), std::sin(a));
    const double exact = 1.0 / std::hypot(th[0] / 2.0, th[1]);
    CHECK(radial(*el, th).value == doctest::Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("polar bodies") {
  CHECK(polar(make_ball(3))->exact_volume_radius().value() == doctest::Approx(1.0));
  const auto p2 = polar(make_ball(3, 2.0));
  CHECK(support(*p2, Vec::Unit(3, 0)).value == doctest::Approx(0.5));
  const auto cube = make_cube(3);
  const auto pp = polar(polar(cube));
  const DirectionNet net = make_net(3, 1000, 3);
  for (std::size_t i = 0; i < net.count; ++i) {
    const Vec th = net.directions.col(static_cast<Eigen::Index>(i));
    CHECK(std::fabs(support(*pp, th).value - support(*cube, th).value) <= 1e-9);
  }
  // Generic polar: radial(K°) * support(K) = 1.
  SupportClosure e;
  e.dim = 2;
  e.name = "ellipse";
  e.support = [](const Vec& u) { return Estimate::exact(std::hypot(2 * u[0], u[1])); };
  const auto el = make_support_body(e);
  const auto pel = polar(el);
  for (double a : {0.1, 0.7, 2.5}) {
    const Vec th = vec2(std::cos(a), std::sin(a));
    CHECK(radial(*pel, th).value * support(*el, th).value == doctest::Approx(1.0).epsilon(1e-15));
  }
  Mat off(2, 3);
  off << 1, 2, 1, 1, 1, 2;
  try {
    polar(make_polytope(off));
    FAIL("expected OriginNotInterior");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::kOriginNotInterior);
  }
}

TEST_CASE("diameters") {
  CHECK(diameter(*make_ball(5)).value == doctest::Approx(2.0));
  double brute = 0.0;
  const Mat v = cube_vertices(3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) brute = std::max(brute, (v.col(i) - v.col(j)).norm());
  const auto res = diameter_search(*make_cube(3));
  CHECK(res.value.value == doctest::Approx(brute).epsilon(1e-9));
  CHECK(res.value.value <= res.upper_bound + 1e-12);
  CHECK(res.net_resolution > 0.0);
  // A thin non-symmetric triangle.
  Mat tri(2, 3);
  tri << -1, 3, 0, -0.1, 0, 0.2;
  double tb = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) tb = std::max(tb, (tri.col(i) - tri.col(j)).norm());
  CHECK(diameter(*make_polytope(tri)).value == doctest::Approx(tb).epsilon(1e-9));
}

TEST_CASE("mean widths") {
  CHECK(mean_width(*make_ball(3)).value == doctest::Approx(1.0));
  for (double q : {1.0, 2.0, 5.0}) {
    CHECK(mean_width(*make_ball(4), q).value == doctest::Approx(1.0));
  }
  const Estimate w = mean_width(*make_cube(2));
  const double ref = oracle::simpson_panels(
                         [](double a) { return std::fabs(std::cos(a)) + std::fabs(std::sin(a)); },
                         0.0, 2.0 * std::numbers::pi, 8) /
                     (2.0 * std::numbers::pi);
  CHECK(ref == doctest::Approx(4.0 / std::numbers::pi).epsilon(1e-12));
  CHECK(std::fabs(w.value - ref) <= std::max(4.0 * w.std_error, 1e-5));
  // 3-D cube: W = 3/2 (mean of |x1|+|x2|+|x3| over the sphere).
  const Estimate w3 = mean_width(*make_cube(3), 1.0, {8192, 16, 4});
  CHECK(std::fabs(w3.value - 1.5) <= 4.0 * w3.std_error);
}

TEST_CASE("volume radii") {
  CHECK(vrad_radial(*make_ball(3)).value == doctest::Approx(1.0));
  CHECK(vrad_radial(*make_ball(4, 3.0)).value == doctest::Approx(3.0));
  const Estimate c = vrad_radial(*make_cube(2), {4096, 16, 1});
  CHECK(std::fabs(c.value - 2.0 / std::sqrt(std::numbers::pi)) <= std::max(4.0 * c.std_error, 1e-6));
  const Estimate c3 = vrad_radial(*make_cube(3), {1 << 15, 16, 2});
  const double ref3 = std::cbrt(8.0 / (4.0 / 3.0 * std::numbers::pi));
  CHECK(std::fabs(c3.value - ref3) <= 4.0 * c3.std_error);
  Mat tri(2, 3);
  tri << 0, 1, 0, 0, 0, 1;
  CHECK(vrad_hull(tri) == doctest::Approx(std::sqrt(0.5 / std::numbers::pi)).epsilon(1e-14));
  CHECK(vrad_hull(cube_vertices(2)) == doctest::Approx(std::sqrt(4.0 / std::numbers::pi)));
}

TEST_CASE("boundary points") {
  const Vec th = vec2(0.6, 0.8);
  CHECK((boundary_point(*make_ball(2), th) - th).norm() < 1e-15);
  const Vec v = boundary_point(*make_cube(2), th);
  CHECK(v.dot(th) == doctest::Approx(support(*make_cube(2), th).value));
}

TEST_CASE("Grassmannian samples") {
  const Subspace full = sample_grassmann(3, 3, 9);
  CHECK((full.basis * full.basis.transpose() - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  const Subspace e = sample_grassmann(5, 2, 42);
  CHECK(e.basis.rows() == 2);
  CHECK(e.basis.cols() == 5);
  CHECK((e.basis * e.basis.transpose() - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  std::vector<double> lens(10000);
  for (std::size_t i = 0; i < lens.size(); ++i) {
    const Subspace l = sample_grassmann(3, 1, 1000 + i);
    lens[i] = l.basis(0, 0) * l.basis(0, 0);
  }
  const Estimate m = batch_mean(lens, {}, 16, 0);
  CHECK(std::fabs(m.value - 1.0 / 3.0) <= 4.0 * m.std_error);
}

TEST_CASE("projected bodies") {
  const Subspace e = sample_grassmann(5, 3, 4);
  const auto pb = project_body(make_ball(5), e);
  CHECK(pb->dim() == 3);
  CHECK(support(*pb, Vec::Unit(3, 1)).value == doctest::Approx(1.0));
  const auto sq = project_body(make_cube(3), coordinate_subspace(3, {0, 1}));
  const Vec th = vec2(1, 1).normalized();
  CHECK(support(*sq, th).value == doctest::Approx(std::sqrt(2.0)));
  const double full = diameter(*make_cube(4)).value;
  for (int s = 0; s < 5; ++s) {
    const auto p = project_body(make_cube(4), sample_grassmann(4, 2, 50 + s));
    CHECK(diameter(*p).value <= full + 1e-9);
  }
}

TEST_CASE("support functions are subadditive and symmetric on nets") {
  const auto cube = make_cube(3);
  const DirectionNet net = make_net(3, 64, 5);
  for (std::size_t i = 0; i < net.count; ++i) {
    const Vec a = net.directions.col(static_cast<Eigen::Index>(i));
    CHECK(cube->support(a).value == doctest::Approx(cube->support(-a).value));
    for (std::size_t j = 0; j < net.count; ++j) {
      const Vec b = net.directions.col(static_cast<Eigen::Index>(j));
      CHECK(cube->support(a + b).value <= cube->support(a).value + cube->support(b).value + 1e-12);
    }
  }
}

TEST_CASE("direction nets are deterministic unit vectors") {
  const auto a = make_net(4, 100, 3);
  const auto b = make_net(4, 100, 3);
  CHECK(a.directions == b.directions);
  CHECK(a.rule == "antithetic");
  CHECK(make_net(2, 10, 0).rule == "grid");
  for (Eigen::Index j = 0; j < a.directions.cols(); ++j) {
    CHECK(a.directions.col(j).norm() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("Santalo bound on symmetric test bodies") {
  Rng rng(3);
  for (int n = 2; n <= 4; ++n) {
    const auto cube = make_cube(n);
    const double v = cube->exact_volume_radius().value();
    const double vp = polar(cube)->exact_volume_radius().value();
    CHECK(v * vp <= 1.0 + 1e-12);
    CHECK(v * vp > 0.5);
  }
}
