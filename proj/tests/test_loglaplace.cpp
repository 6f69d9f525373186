#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "clab/error.hpp"
#include "clab/loglaplace.hpp"
#include "clab/rng.hpp"
#include "oracles.hpp"

using namespace clab;
using namespace clab::loglaplace;
using clab::measures::MeasureSpec;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vec random_vec(Rng& rng, int n, double scale) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

Mat triangle() {
  Mat v(2, 3);
  v << -1.0, 2.0, -0.5, -1.0, 0.0, 1.5;
  return v;
}

std::vector<MeasureSpec> zoo() {
  Mat a(2, 2);
  a << 1.0, 0.4, -0.3, 0.8;
  Mat pts(2, 5);
  pts << 0.1, -0.7, 0.9, 0.3, -0.6, 0.2, 0.5, -0.4, -0.8, 0.5;
  return {
      MeasureSpec::gaussian(3),
      MeasureSpec::uniform_cube(3, 1.0),
      MeasureSpec::uniform_ball(3, 1.5),
      MeasureSpec::uniform_ball(2, 1.0),
      MeasureSpec::uniform_simplex(2),
      MeasureSpec::uniform_simplex(3),
      MeasureSpec::uniform_polytope(triangle()),
      MeasureSpec::affine(MeasureSpec::uniform_cube(2, 1.0), a, vec({0.3, -0.2})),
      MeasureSpec::product({MeasureSpec::uniform_ball(2, 1.0), MeasureSpec::uniform_cube(1, 2.0)}),
      MeasureSpec::empirical(pts),
  };
}

}  // namespace

TEST_CASE("cube log-Laplace transform in one dimension") {
  const auto cube = MeasureSpec::uniform_cube(1, 1.0);
  const Evaluation e = LambdaEvaluator(cube).evaluate(vec({1.0}));
  CHECK(e.value.value == doctest::Approx(std::log(std::sinh(1.0))).epsilon(1e-14));
  CHECK(e.value.value == doctest::Approx(0.161440).epsilon(1e-5));
  CHECK(e.gradient[0] == doctest::Approx(0.313035285499331).epsilon(1e-13));
  CHECK(e.hessian(0, 0) == doctest::Approx(0.275938339033689).epsilon(1e-12));
  for (double s : {1e-6, 0.05, 0.3, 2.0, 15.0, -4.0}) {
    CHECK(lambda_eval(cube, vec({s})).value ==
          doctest::Approx(oracle::cube_lambda_1d(s, 1.0)).epsilon(1e-10));
  }
  CHECK(lambda_eval(cube, vec({800.0})).value ==
        doctest::Approx(800.0 - std::log(1600.0)).epsilon(1e-14));
}

TEST_CASE("ball log-Laplace transform against iterated quadrature") {
  for (int n : {1, 2, 3, 5}) {
    const auto ball = MeasureSpec::uniform_ball(n, 1.3);
    for (double s : {0.01, 0.5, 0.9, 1.2, 4.0, 20.0}) {
      Vec xi = Vec::Zero(n);
      xi[0] = s * 0.6;
      if (n > 1) xi[1] = s * 0.8;
      if (n == 1) xi[0] = s;
      CHECK(lambda_eval(ball, xi).value ==
            doctest::Approx(oracle::ball_lambda_radial(n, 1.3, s)).epsilon(1e-9));
    }
  }
}

TEST_CASE("simplex and polytope transforms against iterated quadrature") {
  const auto simplex = MeasureSpec::uniform_simplex(2);
  for (auto [x, y] : std::vector<std::pair<double, double>>{
           {0.0, 0.0}, {1e-7, 2e-7}, {1.0, 1.0}, {0.5, -2.0}, {3.0, 3.0 + 1e-9}, {-6.0, 4.0}}) {
    CHECK(lambda_eval(simplex, vec({x, y})).value ==
          doctest::Approx(oracle::simplex_lambda_2d(x, y)).epsilon(1e-10));
  }
  // The simplex written as a polytope gives the same transform.
  Mat v(2, 3);
  v << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
  const auto poly = MeasureSpec::uniform_polytope(v);
  for (auto [x, y] : std::vector<std::pair<double, double>>{{0.7, -1.1}, {5.0, 2.0}}) {
    CHECK(lambda_eval(poly, vec({x, y})).value ==
          doctest::Approx(lambda_eval(simplex, vec({x, y})).value).epsilon(1e-11));
  }
}

TEST_CASE("exp divided differences") {
  const std::vector<double> one{0.3};
  CHECK(exp_divided_difference(one) == doctest::Approx(std::exp(0.3)));
  const std::vector<double> two{0.3, 1.7};
  CHECK(exp_divided_difference(two) ==
        doctest::Approx((std::exp(1.7) - std::exp(0.3)) / 1.4).epsilon(1e-14));
  // Confluent nodes give Taylor coefficients.
  const std::vector<double> rep{0.5, 0.5, 0.5, 0.5};
  CHECK(exp_divided_difference(rep) == doctest::Approx(std::exp(0.5) / 6.0).epsilon(1e-14));
  // Widely spread nodes: exp[-50, 0] = (1 - e^-50) / 50.
  const std::vector<double> wide{-50.0, 0.0};
  CHECK(exp_divided_difference(wide) ==
        doctest::Approx(-std::expm1(-50.0) / 50.0).epsilon(1e-13));
  // Nearly coincident nodes where the difference quotient cancels.
  const std::vector<double> close{1.0, 1.0 + 1e-9};
  CHECK(exp_divided_difference(close) == doctest::Approx(std::exp(1.0 + 5e-10)).epsilon(1e-13));
}

TEST_CASE("gradient and Hessian agree with finite differences") {
  Rng rng(derive_seed(77, 0));
  for (const auto& spec : zoo()) {
    const LambdaEvaluator lam(spec);
    const int n = spec.dim();
    for (int trial = 0; trial < 4; ++trial) {
      const Vec xi = random_vec(rng, n, 2.0);
      const Evaluation e = lam.evaluate(xi);
      const double h = 1e-4;
      for (int i = 0; i < n; ++i) {
        Vec d = Vec::Zero(n);
        d[i] = h;
        const double fd = (lam.value(xi + d).value - lam.value(xi - d).value) / (2 * h);
        INFO(spec.describe());
        CHECK(std::fabs(fd - e.gradient[i]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
        const Vec gd = (lam.evaluate(xi + d, 1).gradient - lam.evaluate(xi - d, 1).gradient) / (2 * h);
        for (int j = 0; j < n; ++j) {
          CHECK(std::fabs(gd[j] - e.hessian(j, i)) <= 1e-6 * std::max(1.0, std::fabs(gd[j])));
        }
      }
      // Convexity.
      Eigen::SelfAdjointEigenSolver<Mat> es(e.hessian);
      CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("log-Laplace transform at zero vanishes with barycenter gradient") {
  for (const auto& spec : zoo()) {
    const Evaluation e = LambdaEvaluator(spec).evaluate(Vec::Zero(spec.dim()));
    CHECK(std::fabs(e.value.value) <= 1e-12);
    CHECK((e.gradient - measures::barycenter(spec)).norm() <= 1e-10);
    CHECK((e.hessian - measures::covariance(spec)).norm() <= 1e-9);
  }
}

TEST_CASE("tilt identity") {
  Rng rng(derive_seed(78, 0));
  for (const auto& spec : zoo()) {
    const int n = spec.dim();
    for (int trial = 0; trial < 3; ++trial) {
      const Vec xi = random_vec(rng, n, 1.5);
      const Vec eta = random_vec(rng, n, 1.5);
      const Evaluation base = LambdaEvaluator(spec).evaluate(xi, 1);
      const double expect =
          lambda_eval(spec, xi + eta).value - base.value.value - eta.dot(base.gradient);
      const auto tilted = tilt(spec, xi);
      INFO(spec.describe());
      CHECK(std::fabs(lambda_eval(tilted, eta).value - expect) <= 1e-10 * std::max(1.0, std::fabs(expect)));
      // Tilted measures are centered.
      CHECK(measures::barycenter(tilted).norm() <= 1e-10 * std::max(1.0, base.gradient.norm()));
      // Repeated tilts compose.
      const auto twice = tilt(tilt(spec, xi), eta);
      const auto once = tilt(spec, xi + eta);
      const Vec probe = random_vec(rng, n, 1.0);
      CHECK(lambda_eval(twice, probe).value ==
            doctest::Approx(lambda_eval(once, probe).value).epsilon(1e-10));
    }
  }
}

TEST_CASE("tilt covariance of the interval") {
  const auto t = tilt(MeasureSpec::uniform_cube(1, 1.0), vec({1.0}));
  CHECK(measures::covariance(t)(0, 0) == doctest::Approx(0.275938339033689).epsilon(1e-12));
  CHECK(tilt(MeasureSpec::gaussian(2), vec({3.0, 1.0})).describe() ==
        MeasureSpec::gaussian(2).describe());
}

TEST_CASE("level sets of the log-Laplace transform") {
  SUBCASE("interval radius") {
    const double expect = oracle::bisect(
        [](double t) { return std::log(std::sinh(t) / t) - 1.0; }, 0.1, 10.0);
    CHECK(expect == doctest::Approx(2.68577383984406906).epsilon(1e-14));
    const auto body = lambda_p_body(MeasureSpec::uniform_cube(1, 1.0), 1.0);
    CHECK(body->radial(vec({1.0})).value == doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("gaussian radius is sqrt(2p)") {
    for (double p : {1.0, 2.0, 3.5, 8.0}) {
      const auto body = lambda_p_body(MeasureSpec::gaussian(3), p);
      const Vec u = vec({0.3, -0.4, 1.2}).normalized();
      CHECK(body->radial(u).value == doctest::Approx(std::sqrt(2.0 * p)).epsilon(1e-9));
    }
  }
  SUBCASE("nesting in p") {
    Rng rng(derive_seed(79, 0));
    for (const auto& spec : zoo()) {
      const auto lam = std::make_shared<const LambdaEvaluator>(spec);
      for (int trial = 0; trial < 3; ++trial) {
        const Vec u = random_vec(rng, spec.dim(), 1.0).normalized();
        double prev = 0.0;
        for (double p : {0.5, 1.0, 2.0, 4.0}) {
          const double r = lambda_p_body(lam, p)->radial(u).value;
          CHECK(r > prev);
          // On the boundary the larger side of the symmetrized transform is p.
          const double top =
              std::max(lam->value(r * u).value, lam->value(-r * u).value);
          CHECK(top == doctest::Approx(p).epsilon(1e-8));
          prev = r;
        }
      }
    }
  }
  SUBCASE("empirical measures bound the level set away from zero") {
    Mat pts(1, 2);
    pts << -1.0, 1.0;
    const auto body = lambda_p_body(MeasureSpec::empirical(pts), 1.0);
    const double expect = std::acosh(std::exp(1.0));
    CHECK(body->radial(vec({1.0})).value == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("Monte Carlo transform matches the exact one") {
  McConfig mc;
  mc.samples = 1 << 16;
  const auto cube = MeasureSpec::uniform_cube(2, 1.0);
  const LambdaEvaluator lam(cube, Mode::kMonteCarlo, mc);
  CHECK(lam.mode_name() == "monte-carlo");
  CHECK(LambdaEvaluator(cube).mode_name() == "closed-form");
  CHECK(LambdaEvaluator(MeasureSpec::uniform_simplex(2)).mode_name() == "quadrature");
  for (const Vec& xi : {vec({0.5, 0.2}), vec({1.5, -1.0})}) {
    const Estimate e = lam.value(xi);
    const double exact = lambda_eval(cube, xi).value;
    CHECK(e.std_error > 0.0);
    CHECK(std::fabs(e.value - exact) <= 4.0 * e.std_error);
  }
}

TEST_CASE("transform outside the domain is reported") {
  Mat pts(1, 2);
  pts << -1.0, 1.0;
  const auto emp = MeasureSpec::empirical(pts);
  CHECK_THROWS_AS(tilt(emp, vec({std::numeric_limits<double>::infinity()})), Error);
  CHECK_THROWS_AS(tilt(MeasureSpec::uniform_cube(2, 1.0), vec({1.0})), Error);
}

TEST_CASE("star body samples and Psi") {
  SUBCASE("weighted cloud is uniform on the body") {
    const auto body = bodies::make_box(vec({2.0, 0.5}));
    const StarSample s = sample_star_body(*body, 1.0, 40000, 5);
    double mass_right = 0.0;
    double second = 0.0;
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
      if (s.points(0, i) > 1.0) mass_right += s.weights[i];
      second += s.weights[i] * s.points(0, i) * s.points(0, i);
    }
    CHECK(mass_right == doctest::Approx(0.25).epsilon(0.03));
    CHECK(second == doctest::Approx(4.0 / 3.0).epsilon(0.03));
    const Mat r = resample(s, 20000, 6);
    CHECK((r.array().abs().row(0) <= 2.0 + 1e-12).all());
    CHECK((r.row(0).array() > 1.0).cast<double>().mean() == doctest::Approx(0.25).epsilon(0.05));
  }
  SUBCASE("gaussian Psi") {
    CHECK(psi_p_estimate(MeasureSpec::gaussian(3), 2.0, 256, 1).value ==
          doctest::Approx(1.0).epsilon(1e-12));
    const auto scaled =
        MeasureSpec::affine(MeasureSpec::gaussian(2), 1.7 * Mat::Identity(2, 2), Vec::Zero(2));
    CHECK(psi_p_estimate(scaled, 1.0, 256, 1).value ==
          doctest::Approx(1.7 * 1.7).epsilon(1e-12));
  }
  SUBCASE("cube Psi against a grid average") {
    // Average of det Hess over half the level set on a polar grid.
    const double p = 2.0;
    const auto cube = MeasureSpec::uniform_cube(2, 1.0);
    const auto lam = std::make_shared<const LambdaEvaluator>(cube);
    const auto body = lambda_p_body(lam, p);
    double num = 0.0;
    double den = 0.0;
    const int na = 720;
    const int nr = 40;
    for (int a = 0; a < na; ++a) {
      const double ang = 2.0 * std::numbers::pi * (a + 0.5) / na;
      const Vec u = vec({std::cos(ang), std::sin(ang)});
      const double rmax = 0.5 * body->radial(u).value;
      for (int k = 0; k < nr; ++k) {
        const double r = rmax * (k + 0.5) / nr;
        const Vec x = r * u;
        auto second = [](double s) {
          const double h = 1e-3;
          return (oracle::cube_lambda_1d(s + h, 1.0) - 2.0 * oracle::cube_lambda_1d(s, 1.0) +
                  oracle::cube_lambda_1d(s - h, 1.0)) /
                 (h * h);
        };
        const double w = r * rmax / nr;
        num += w * second(x[0]) * second(x[1]);
        den += w;
      }
    }
    const double expect = std::sqrt(num / den);
    PsiConfig cfg;
    cfg.points = 8192;
    const Estimate e = psi_p_estimate(lam, p, cfg);
    CHECK(std::fabs(e.value - expect) <= std::max(4.0 * e.std_error, 1e-3 * expect));
  }
}
