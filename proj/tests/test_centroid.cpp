#include <doctest.h>

#include <cmath>
#include <numbers>

#include "clab/centroid.hpp"
#include "clab/error.hpp"
#include "clab/rng.hpp"
#include "oracles.hpp"

using namespace clab;
using namespace clab::centroid;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vec random_unit(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v.normalized();
}

McConfig small_mc(std::uint64_t seed = 11) {
  McConfig mc;
  mc.samples = 1 << 16;
  mc.seed = seed;
  return mc;
}

// E(a x + b y)^4 for x, y uniform on [-1, 1].
double square_fourth_moment(double a, double b) {
  return (std::pow(a, 4) + std::pow(b, 4)) / 5.0 + 6.0 * a * a * b * b / 9.0;
}

}  // namespace

TEST_CASE("centroid body supports in closed form") {
  const auto g4 = zp_body(MeasureSpec::gaussian(4), 2.0);
  Rng rng(derive_seed(3, 0));
  for (int i = 0; i < 10; ++i) {
    CHECK(g4->support(random_unit(rng, 4)).value == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto seg = zp_body(MeasureSpec::uniform_cube(1, 1.0), 1.0);
  CHECK(seg->support(vec({1.0})).value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(seg->support(vec({-1.0})).value == doctest::Approx(0.5).epsilon(1e-12));
  const auto g2 = zp_body(MeasureSpec::gaussian(2), 1.0);
  CHECK(g2->support(vec({0.6, 0.8})).value ==
        doctest::Approx(oracle::gamma_p(1.0)).epsilon(1e-10));
  CHECK(oracle::gamma_p(1.0) == doctest::Approx(0.797885).epsilon(1e-6));
}

TEST_CASE("Z_inf of compactly supported measures") {
  const auto zinf = zp_body(MeasureSpec::uniform_cube(2, 1.0), kInfinity);
  CHECK(zinf->support(vec({0.6, -0.8})).value == doctest::Approx(1.4).epsilon(1e-12));
  const auto tri = zp_body(MeasureSpec::uniform_simplex(2), kInfinity);
  // conv(simplex, -simplex) reaches 1 along e1 in both directions.
  CHECK(tri->support(vec({-1.0, 0.0})).value == doctest::Approx(1.0));
  CHECK_THROWS_AS(zp_body(MeasureSpec::gaussian(2), kInfinity), Error);
}

TEST_CASE("diameters of centroid bodies") {
  CHECK(zp_diam(MeasureSpec::gaussian(3), 4.0).value ==
        doctest::Approx(2.0 * std::pow(3.0, 0.25)).epsilon(1e-10));
  CHECK(2.0 * oracle::gamma_p(4.0) == doctest::Approx(2.6321).epsilon(1e-4));
  CHECK(zp_diam(measures::whiten(MeasureSpec::uniform_cube(3, 1.0)), 2.0).value ==
        doctest::Approx(2.0).epsilon(1e-10));
  CHECK(zp_diam(MeasureSpec::uniform_cube(1, 1.0), 1.0).value == doctest::Approx(1.0));

  SUBCASE("square at p = 4 by search") {
    const auto mu = std::make_shared<const MeasureEvaluator>(MeasureSpec::uniform_cube(2, 1.0),
                                                             small_mc());
    const auto res = zp_diam_search(mu, 4.0);
    const double expect = 2.0 * std::pow(square_fourth_moment(std::sqrt(0.5), std::sqrt(0.5)), 0.25);
    CHECK(std::fabs(res.value.value - expect) <= 4.0 * res.value.std_error + 1e-6);
    CHECK(std::fabs(std::fabs(res.argmax[0]) - std::sqrt(0.5)) < 0.05);
    CHECK(res.upper_bound >= res.value.value);
  }
}

TEST_CASE("volume radii of centroid bodies") {
  CHECK(zp_vrad(measures::whiten(MeasureSpec::uniform_cube(3, 1.0)), 2.0).value ==
        doctest::Approx(1.0).epsilon(1e-10));
  CHECK(zp_vrad(MeasureSpec::gaussian(3), 4.0).value ==
        doctest::Approx(std::pow(3.0, 0.25)).epsilon(1e-10));
  CHECK(zp_vrad(MeasureSpec::gaussian(3), 4.0).value == doctest::Approx(1.31607).epsilon(1e-5));

  SUBCASE("hull route agrees with the covariance formula") {
    VradConfig cfg;
    cfg.route = VradRoute::kHull;
    for (int n = 2; n <= 4; ++n) {
      for (const auto& spec : {MeasureSpec::uniform_cube(n, 1.0),
                               measures::recenter(MeasureSpec::uniform_simplex(n)),
                               MeasureSpec::uniform_ball(n, 1.0)}) {
        const double expect =
            std::exp(*numerics::logdet_spd(measures::covariance(spec)) / (2.0 * n));
        const Estimate e = zp_vrad(spec, 2.0, small_mc(), cfg);
        INFO(spec.describe());
        CHECK(std::fabs(e.value / expect - 1.0) <= 0.01);
      }
    }
  }

  SUBCASE("square at p = 4 against the planar area formula") {
    // A = 1/2 int (h^2 - h'^2) over the circle, with h in closed form.
    auto h = [](double t) {
      return std::pow(square_fourth_moment(std::cos(t), std::sin(t)), 0.25);
    };
    const double step = 1e-5;
    const double area = 0.5 * oracle::simpson_panels(
                                  [&](double t) {
                                    const double d = (h(t + step) - h(t - step)) / (2 * step);
                                    return h(t) * h(t) - d * d;
                                  },
                                  0.0, 2.0 * std::numbers::pi, 64, 1e-10);
    const double expect = std::sqrt(area / std::numbers::pi);
    const Estimate e = zp_vrad(MeasureSpec::uniform_cube(2, 1.0), 4.0, small_mc());
    CHECK(std::fabs(e.value - expect) <= 4.0 * e.std_error + 1e-4);
  }

  SUBCASE("radial route") {
    VradConfig cfg;
    cfg.route = VradRoute::kRadial;
    cfg.directions = 256;
    const Estimate e = zp_vrad(MeasureSpec::uniform_cube(2, 1.0), 2.0, small_mc(), cfg);
    CHECK(e.value == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(2e-3));
  }
}

TEST_CASE("psi_alpha constants") {
  const MeasureEvaluator g2(MeasureSpec::gaussian(2), McConfig{});
  std::vector<double> grid;
  for (int p = 2; p <= 16; ++p) grid.push_back(p);
  const auto r = psi_alpha_constant(g2, 2.0, grid);
  CHECK(r.value.value == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
  CHECK(r.p_at == 2.0);
  // gamma_p / sqrt(p) is maximal at p = 2.
  for (double p : grid) CHECK(oracle::gamma_p(p) / std::sqrt(p) <= 1.0 / std::sqrt(2.0) + 1e-12);

  const MeasureEvaluator cube(MeasureSpec::uniform_cube(2, 1.0), small_mc());
  for (double alpha : {1.0, 1.5, 2.0}) {
    const auto single = psi_alpha_constant(cube, alpha, {2.0});
    CHECK(single.value.value == doctest::Approx(std::pow(2.0, -1.0 / alpha)).epsilon(1e-12));
  }

  SUBCASE("interval with alpha = 1 against brute force") {
    const MeasureEvaluator seg(MeasureSpec::uniform_cube(1, 1.0), McConfig{});
    const auto res = psi_alpha_constant(seg, 1.0, {2, 3, 4, 5, 6, 7, 8});
    double brute = 0.0;
    for (int p = 2; p <= 8; ++p) {
      // E|x|^p = 1 / (p + 1) on [-1, 1].
      brute = std::max(brute, std::pow(1.0 / (p + 1.0), 1.0 / p) / (p * std::sqrt(1.0 / 3.0)));
    }
    CHECK(res.value.value == doctest::Approx(brute).epsilon(1e-10));
    CHECK(res.value.value <= 1.0);
  }
  CHECK_THROWS_AS(psi_alpha_constant(g2, 2.5, grid), Error);
  CHECK_THROWS_AS(psi_alpha_constant(g2, 2.0, {1.5}), Error);
}

TEST_CASE("I_q norms") {
  CHECK(iq_norm(measures::whiten(MeasureSpec::uniform_cube(4, 1.0)), 2.0).value ==
        doctest::Approx(2.0).epsilon(1e-10));
  CHECK(iq_norm(MeasureSpec::gaussian(2), 2.0).value == doctest::Approx(std::sqrt(2.0)));
  CHECK(iq_norm(MeasureSpec::gaussian(2), 4.0).value ==
        doctest::Approx(std::pow(8.0, 0.25)).epsilon(1e-12));
  // Chi-square oracle: E|g|^4 = n(n + 2).
  CHECK(std::pow(8.0, 0.25) == doctest::Approx(1.68179).epsilon(1e-5));
  const Estimate mc = iq_norm(MeasureSpec::uniform_cube(3, 1.0), 3.0, small_mc());
  const double exact = iq_norm(MeasureSpec::uniform_cube(3, 1.0), 2.0).value;
  CHECK(mc.value >= exact - 4.0 * mc.std_error);
}

TEST_CASE("centroid body properties on random directions") {
  Rng rng(derive_seed(91, 0));
  const std::vector<MeasureSpec> specs{
      MeasureSpec::uniform_cube(3, 1.0), measures::recenter(MeasureSpec::uniform_simplex(3)),
      MeasureSpec::uniform_ball(3, 2.0)};
  for (const auto& spec : specs) {
    const auto mu = std::make_shared<const MeasureEvaluator>(spec, small_mc());
    for (int trial = 0; trial < 20; ++trial) {
      const Vec u = random_unit(rng, 3);
      const Vec v = random_unit(rng, 3);
      double prev = 0.0;
      for (double p : {1.0, 1.5, 2.0, 3.0, 5.0, 8.0}) {
        const Estimate h = zp_support(*mu, u, p);
        CHECK(h.value >= prev - 4.0 * h.std_error);
        prev = h.value;
      }
      const auto body = zp_body(mu, 3.0);
      const double hu = body->support(u).value;
      CHECK(body->support(-u).value == doctest::Approx(hu).epsilon(1e-12));
      CHECK(body->support(u + v).value <= hu + body->support(v).value + 1e-12);
      CHECK(body->support(2.5 * u).value == doctest::Approx(2.5 * hu).epsilon(1e-12));
      // Boundary points lie on the supporting hyperplane and inside the body.
      const auto sg = body->support_gradient(u);
      REQUIRE(sg.has_value());
      CHECK(sg->gradient.dot(u) == doctest::Approx(hu).epsilon(1e-9));
      CHECK(sg->gradient.dot(v) <= body->support(v).value + 1e-9);
    }
  }
}

TEST_CASE("rotation equivariance") {
  Rng rng(derive_seed(92, 0));
  Mat q = Eigen::HouseholderQR<Mat>(Mat::NullaryExpr(3, 3, [&] { return rng.normal(); }))
              .householderQ();
  const auto base = MeasureSpec::uniform_cube(3, 1.0);
  const auto rotated = MeasureSpec::affine(base, q, Vec::Zero(3));
  const MeasureEvaluator a(base, small_mc(5));
  const MeasureEvaluator b(rotated, small_mc(5));
  for (int trial = 0; trial < 10; ++trial) {
    const Vec u = random_unit(rng, 3);
    const Estimate ha = zp_support(a, u, 4.0);
    const Estimate hb = zp_support(b, q * u, 4.0);
    CHECK(std::fabs(ha.value - hb.value) <= 4.0 * (ha.std_error + hb.std_error));
  }
}
