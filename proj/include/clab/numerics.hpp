#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

namespace clab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace numerics {

inline constexpr double kQuadratureTol = 1e-13;

// Adaptive Gauss-Kronrod on [a, b]; relative tolerance against the L1 norm of
// the integrand, which bounds the absolute error by 1e-13 * L1.
double integrate(const std::function<double(double)>& f, double a, double b);

// Double-exponential rule on [a, b]; tolerant of integrable endpoint
// singularities such as (1 - t^2)^{k/2}.
double integrate_endpoint_singular(const std::function<double(double)>& f,
                                   double a, double b);

// E|g|^p for a standard normal g.
double gaussian_abs_moment(double p);

// E|t|^p where t is a one-dimensional marginal of the uniform measure on the
// unit ball of R^n; density proportional to (1 - t^2)^{(n-1)/2}.
double ball_marginal_abs_moment(int n, double p);

// Normalizing constant of (1 - t^2)^{(n-1)/2} on [-1, 1].
double ball_marginal_norm(int n);

double log_unit_ball_volume(int n);
double unit_ball_volume(int n);

// Absolute power |t|^p with fast paths for small integer p.
double abs_pow(double t, double p);

// Monotone bisection: f nondecreasing, returns sup{t in [lo, hi] : f(t) <= 0}
// to relative width `rtol`.
double bisect_last_nonpositive(const std::function<double(double)>& f,
                               double lo, double hi, double rtol);

// Symmetric square root and inverse square root of an SPD matrix.
Mat sym_sqrt(const Mat& a);
Mat sym_inv_sqrt(const Mat& a);

// log det of an SPD matrix via Cholesky; nullopt if not positive definite.
std::optional<double> logdet_spd(const Mat& a);

// max_ij |B B^T - I|_ij for a row basis B.
double orthonormality_defect(const Mat& rows);

// Eigenvalue-clipped determinant of a symmetric matrix (eigenvalues below
// `floor` are raised to it).
double clipped_det(const Mat& a, double floor = 1e-12);

// lo, lo r, lo r^2, ... with hi appended when the last step falls short.
std::vector<double> geometric_grid(double lo, double hi, double ratio = 1.25);

}  // namespace numerics
}  // namespace clab
