#include "clab/numerics.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>

#include "clab/error.hpp"

namespace clab::numerics {

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, 20, kQuadratureTol, &err);
}

double integrate_endpoint_singular(const std::function<double(double)>& f,
                                   double a, double b) {
  if (a == b) return 0.0;
  thread_local boost::math::quadrature::tanh_sinh<double> rule(12);
  return rule.integrate(f, a, b, kQuadratureTol);
}

double gaussian_abs_moment(double p) {
  return std::exp(0.5 * p * std::numbers::ln2 + std::lgamma(0.5 * (p + 1.0)) -
                  0.5 * std::log(std::numbers::pi));
}

double ball_marginal_abs_moment(int n, double p) {
  const double k = 0.5 * (n + 1.0);
  return std::exp(std::lgamma(0.5 * (p + 1.0)) - std::lgamma(0.5 * (p + 1.0) + k) -
                  std::lgamma(0.5) + std::lgamma(0.5 + k));
}

double ball_marginal_norm(int n) {
  return boost::math::beta(0.5, 0.5 * (n + 1.0));
}

double log_unit_ball_volume(int n) {
  return 0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n + 1.0);
}

double unit_ball_volume(int n) { return std::exp(log_unit_ball_volume(n)); }

double abs_pow(double t, double p) {
  const double a = std::fabs(t);
  if (p == 2.0) return a * a;
  if (p == 1.0) return a;
  if (p == 4.0) {
    const double s = a * a;
    return s * s;
  }
  if (p == 3.0) return a * a * a;
  if (a == 0.0) return 0.0;
  return std::pow(a, p);
}

double bisect_last_nonpositive(const std::function<double(double)>& f,
                               double lo, double hi, double rtol) {
  while (hi - lo > rtol * std::max(std::fabs(hi), 1e-300)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Mat sym_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  return es.operatorSqrt();
}

Mat sym_inv_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  return es.operatorInverseSqrt();
}

std::optional<double> logdet_spd(const Mat& a) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Mat& l = llt.matrixL();
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return std::nullopt;
    s += 2.0 * std::log(l(i, i));
  }
  return s;
}

double orthonormality_defect(const Mat& rows) {
  const Mat g = rows * rows.transpose();
  return (g - Mat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

double clipped_det(const Mat& a, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  double d = 1.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    d *= std::max(es.eigenvalues()(i), floor);
  }
  return d;
}

std::vector<double> geometric_grid(double lo, double hi, double ratio) {
  std::vector<double> out;
  if (!(lo > 0.0) || !(hi >= lo) || !(ratio > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad geometric grid");
  }
  for (double q = lo; q < hi * (1.0 - 1e-12); q *= ratio) out.push_back(q);
  out.push_back(hi);
  return out;
}

}  // namespace clab::numerics
