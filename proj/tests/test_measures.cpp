#include <doctest.h>

#include <cmath>
#include <numbers>

#include "clab/error.hpp"
#include "clab/measures.hpp"
#include "clab/rng.hpp"
#include "oracles.hpp"

using namespace clab;
using namespace clab::measures;

namespace {

Vec unit(int n, int i) {
  Vec v = Vec::Zero(n);
  v[i] = 1.0;
  return v;
}

Vec random_unit(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v.normalized();
}

McConfig small_mc(std::size_t n = 1 << 16) {
  McConfig mc;
  mc.samples = n;
  return mc;
}

Mat square_vertices() {
  Mat v(2, 4);
  v << -1, 1, 1, -1, -1, -1, 1, 1;
  return v;
}

}  // namespace

TEST_CASE("gaussian samples carry uniform weights") {
  const auto s = sample(MeasureSpec::gaussian(2), 4, 42);
  CHECK(s.points.rows() == 2);
  CHECK(s.points.cols() == 4);
  for (int i = 0; i < 4; ++i) CHECK(s.weights[i] == 0.25);
  CHECK(s.effective_sample_size == doctest::Approx(4.0));
}

TEST_CASE("sampling is bit-reproducible") {
  const std::vector<MeasureSpec> specs = {
      MeasureSpec::gaussian(3), MeasureSpec::uniform_ball(3, 2.0),
      MeasureSpec::uniform_simplex(3), MeasureSpec::uniform_polytope(square_vertices()),
      MeasureSpec::product({MeasureSpec::uniform_cube(1, 1.0), MeasureSpec::gaussian(2)})};
  for (const auto& spec : specs) {
    const auto a = sample(spec, 10000, 77);
    const auto b = sample(spec, 10000, 77);
    CHECK(a.points == b.points);
    CHECK(a.weights == b.weights);
    const auto c = sample(spec, 10000, 78);
    CHECK(a.points != c.points);
  }
}

TEST_CASE("uniform cube sample mean is near zero") {
  const auto s = sample(MeasureSpec::uniform_cube(1, 1.0), 1000000, 7);
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = s.points(0, static_cast<Eigen::Index>(i));
  const Estimate e = batch_mean(v, {}, 16, 7);
  CHECK(std::fabs(e.value) <= 4.0 * e.std_error);
}

TEST_CASE("sample moments agree with exact moments") {
  const std::vector<MeasureSpec> specs = {
      MeasureSpec::uniform_ball(3, 2.0), MeasureSpec::uniform_simplex(3),
      MeasureSpec::uniform_polytope(square_vertices()), MeasureSpec::uniform_cube(2, 0.5)};
  for (const auto& spec : specs) {
    const auto s = sample(spec, 200000, 3);
    const Vec mean = s.points * s.weights;
    const Mat centered = s.points.colwise() - mean;
    const Mat cov = centered * s.weights.asDiagonal() * centered.transpose();
    CHECK((mean - barycenter(spec)).cwiseAbs().maxCoeff() < 0.01);
    CHECK((cov - covariance(spec)).cwiseAbs().maxCoeff() < 0.01);
  }
}

TEST_CASE("barycenters") {
  CHECK(barycenter(MeasureSpec::gaussian(3)).isZero());
  const Vec b = barycenter(MeasureSpec::uniform_simplex(2));
  CHECK(b[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Mat tri(2, 3);
  tri << 0, 1, 0, 0, 0, 1;
  const Vec bp = barycenter(MeasureSpec::uniform_polytope(tri));
  CHECK(bp[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("covariances") {
  CHECK(covariance(MeasureSpec::gaussian(4)).isIdentity());
  const Mat c = covariance(MeasureSpec::uniform_cube(2, 1.0));
  CHECK(c(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(c(0, 1) == 0.0);
  for (int m = 1; m <= 6; ++m) {
    const Mat cb = covariance(MeasureSpec::uniform_ball(m, std::sqrt(m + 2.0)));
    CHECK((cb - Mat::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-14);
  }
  // The square as a polytope matches the cube measure.
  const Mat cp = covariance(MeasureSpec::uniform_polytope(square_vertices()));
  CHECK((cp - c).cwiseAbs().maxCoeff() < 1e-13);
  // Simplex covariance from brute-force quadrature in 2-D.
  const double exx = oracle::simpson_panels(
      [](double x) { return 2.0 * x * x * (1.0 - x); }, 0.0, 1.0, 4);
  const Mat cs = covariance(MeasureSpec::uniform_simplex(2));
  CHECK(cs(0, 0) == doctest::Approx(exx - 1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("whitening") {
  const auto g = MeasureSpec::gaussian(3);
  CHECK(whiten(g).node().v.index() == g.node().v.index());
  const auto cube = whiten(MeasureSpec::uniform_cube(2, 1.0));
  const auto* a = std::get_if<AffineImage>(&cube.node().v);
  REQUIRE(a != nullptr);
  CHECK(a->matrix(0, 0) == doctest::Approx(std::sqrt(3.0)));
  const auto ball = whiten(MeasureSpec::uniform_ball(4, 1.0));
  CHECK(std::get<AffineImage>(ball.node().v).matrix(1, 1) == doctest::Approx(std::sqrt(6.0)));
  Mat m(2, 2);
  m << 2, 1, 0, 1;
  Vec sh(2);
  sh << 3, -1;
  for (const auto& spec :
       {MeasureSpec::affine(MeasureSpec::uniform_simplex(2), m, sh),
        MeasureSpec::uniform_polytope(square_vertices() * 3.0)}) {
    const auto w = whiten(spec);
    CHECK((covariance(w) - Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK(barycenter(w).norm() < 1e-12);
  }
  Mat pts(2, 3);
  pts << 0, 1, 2, 0, 1, 2;
  try {
    whiten(MeasureSpec::empirical(pts));
    FAIL("expected SingularCovariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularCovariance);
  }
}

TEST_CASE("projections") {
  const auto p = project(MeasureSpec::gaussian(5), coordinate_subspace(5, {0, 1}));
  CHECK(p.kind() == "gaussian");
  CHECK(p.dim() == 2);
  const auto prod = MeasureSpec::product(
      {MeasureSpec::uniform_cube(1, 1.0), MeasureSpec::uniform_cube(1, 1.0)});
  const auto q = project(prod, coordinate_subspace(2, {0}));
  CHECK(covariance(q)(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  Mat bad(1, 2);
  bad << 1.0, 0.1;
  try {
    project(prod, Subspace{2, bad});
    FAIL("expected NonOrthonormalBasis");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonOrthonormalBasis);
  }
  const auto full = project(MeasureSpec::uniform_cube(2, 1.0), coordinate_subspace(2, {1, 0}));
  CHECK((covariance(full) - Mat::Identity(2, 2) / 3.0).norm() < 1e-15);
}

TEST_CASE("density suprema") {
  CHECK(density_sup(MeasureSpec::uniform_cube(2, 1.0)) == doctest::Approx(0.25));
  CHECK(density_sup(MeasureSpec::gaussian(2)) ==
        doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-15));
  Mat two(1, 1);
  two << 2.0;
  CHECK(density_sup(MeasureSpec::affine(MeasureSpec::uniform_cube(1, 1.0), two, Vec::Zero(1))) ==
        doctest::Approx(0.25));
  CHECK(density_sup(MeasureSpec::uniform_simplex(3)) == doctest::Approx(6.0));
  try {
    density_sup(MeasureSpec::empirical(Mat::Identity(2, 2)));
    FAIL("expected UnsupportedVariant");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedVariant);
  }
}

TEST_CASE("directional moments of analytic marginals") {
  CHECK(directional_moment(MeasureSpec::gaussian(2), unit(2, 0), 2).value ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(directional_moment(MeasureSpec::uniform_cube(1, 1.0), unit(1, 0), 1).value ==
        doctest::Approx(0.5).epsilon(1e-15));
  const Estimate g1 = directional_moment(MeasureSpec::gaussian(3), unit(3, 1), 1);
  CHECK(g1.is_exact());
  CHECK(g1.value == doctest::Approx(oracle::gaussian_abs_moment(1.0)).epsilon(1e-12));
  CHECK(g1.value == doctest::Approx(0.797884560802865).epsilon(1e-12));
  for (double p : {1.0, 2.5, 4.0, 7.3}) {
    const double ref = oracle::ball_marginal_abs_moment(5, p);
    CHECK(directional_moment(MeasureSpec::uniform_ball(5, 1.0), unit(5, 2), p).value ==
          doctest::Approx(ref).epsilon(1e-11));
  }
}

TEST_CASE("shifted marginals use quadrature") {
  // simplex in 1-D is U[0,1]: E|x|^p = 1/(p+1).
  for (double p : {1.0, 1.5, 3.0}) {
    CHECK(directional_moment(MeasureSpec::uniform_simplex(1), unit(1, 0), p).value ==
          doctest::Approx(1.0 / (p + 1.0)).epsilon(1e-12));
  }
  // U[-1,1] shifted by 0.3: brute force.
  Mat one = Mat::Identity(1, 1);
  Vec sh(1);
  sh << 0.3;
  const auto spec = MeasureSpec::affine(MeasureSpec::uniform_cube(1, 1.0), one, sh);
  const double ref = oracle::simpson_panels(
                         [](double x) { return 0.5 * std::pow(std::fabs(x + 0.3), 2.7); }, -1.0,
                         -0.3, 8) +
                     oracle::simpson_panels(
                         [](double x) { return 0.5 * std::pow(std::fabs(x + 0.3), 2.7); }, -0.3,
                         1.0, 8);
  CHECK(directional_moment(spec, unit(1, 0), 2.7).value == doctest::Approx(ref).epsilon(1e-11));
}

TEST_CASE("Monte Carlo moments are within error bars") {
  const auto spec = MeasureSpec::uniform_cube(3, 1.0);
  MeasureEvaluator ev(spec, small_mc(1 << 18));
  Vec th(3);
  th << 1, 0, 0;
  // E|x1 + x2|^2 / 2 = 1/3 exactly (p = 2 path) and E|x1|^4 = 1/5.
  Vec diag(3);
  diag << 1, 1, 0;
  diag.normalize();
  CHECK(ev.moment(diag, 2.0).value == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  const auto g = ev.moment_gradient(th, 4.0);
  CHECK(std::fabs(g.value.value - 0.2) <= 4.0 * g.value.std_error);
  CHECK(g.value.std_error > 0.0);
  // E|<x, (1,1)/sqrt2>|^4 has the exact value (1/5 + 3*2/9 + 1/5)/4 = 0.2666...
  const double ref = (0.2 + 6.0 / 9.0 + 0.2) / 4.0;
  const Estimate m = ev.moment(diag, 4.0);
  CHECK(std::fabs(m.value - ref) <= 4.0 * m.std_error);
}

TEST_CASE("halfspace masses") {
  CHECK(halfspace_mass(MeasureSpec::gaussian(2), unit(2, 0), 0.0).value == 0.5);
  CHECK(halfspace_mass(MeasureSpec::uniform_cube(1, 1.0), unit(1, 0), 0.5).value ==
        doctest::Approx(0.25));
  const auto simplex = recenter(MeasureSpec::uniform_simplex(2));
  MeasureEvaluator ev(simplex, small_mc());
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Vec th = random_unit(2, rng);
    const Estimate e = ev.halfspace_mass(th, 0.0);
    const double eps = 4.0 * e.std_error;
    CHECK(e.value >= 1.0 / std::numbers::e - eps);
    CHECK(e.value <= 1.0 - 1.0 / std::numbers::e + eps);
  }
  // Ball marginal tail against quadrature.
  const double ref = oracle::simpson_panels(
      [](double u) { return std::pow(std::cos(u), 3); }, std::asin(0.4), std::numbers::pi / 2,
      8) / oracle::simpson_panels([](double u) { return std::pow(std::cos(u), 3); },
                                  -std::numbers::pi / 2, std::numbers::pi / 2, 16);
  CHECK(halfspace_mass(MeasureSpec::uniform_ball(3, 2.0), unit(3, 1), 0.8).value ==
        doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("log-concavity of the halfspace mass on a grid") {
  for (const auto& spec : {MeasureSpec::uniform_ball(4, 1.0), MeasureSpec::gaussian(2),
                           MeasureSpec::uniform_cube(2, 1.0)}) {
    std::vector<double> logs;
    for (int i = 0; i <= 30; ++i) {
      logs.push_back(
          std::log(halfspace_mass(spec, unit(spec.dim(), 0), -0.95 + 0.06 * i).value));
    }
    for (std::size_t i = 1; i + 1 < logs.size(); ++i) {
      CHECK(logs[i] >= 0.5 * (logs[i - 1] + logs[i + 1]) - 1e-12);
    }
  }
}

TEST_CASE("Lyapunov monotonicity of moment norms") {
  const auto spec = whiten(MeasureSpec::uniform_simplex(3));
  MeasureEvaluator ev(spec, small_mc());
  Rng rng(8);
  for (int k = 0; k < 10; ++k) {
    const Vec th = random_unit(3, rng);
    double prev = 0.0;
    double prev_se = 0.0;
    for (double p : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) {
      const Estimate m = ev.moment(th, p);
      const double h = std::pow(m.value, 1.0 / p);
      const double se = h / p * m.std_error / m.value;
      CHECK(h >= prev - 4.0 * (se + prev_se));
      prev = h;
      prev_se = se;
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  Mat singular(2, 2);
  singular << 1, 2, 2, 4;
  try {
    MeasureSpec::affine(MeasureSpec::gaussian(2), singular, Vec::Zero(2));
    FAIL("expected DegenerateSpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateSpec);
  }
  CHECK_THROWS_AS(MeasureSpec::empirical(Mat::Identity(2, 2), Vec::Constant(2, -1.0)), Error);
  CHECK_THROWS_AS(MeasureSpec::uniform_ball(2, 0.0), Error);
}

TEST_CASE("empirical weights are normalized") {
  Vec w(3);
  w << 1, 2, 1;
  const auto e = MeasureSpec::empirical(Mat::Identity(2, 3), w);
  CHECK(std::get<Empirical>(e.node().v).weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(barycenter(e)[1] == doctest::Approx(0.5));
}
