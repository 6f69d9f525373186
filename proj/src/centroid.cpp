#include "clab/centroid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "clab/error.hpp"
#include "clab/hull.hpp"
#include "clab/numerics.hpp"
#include "clab/rng.hpp"

namespace clab::centroid {

namespace {

void require_p(double p) {
  if (!(p >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "p must be >= 1");
}

std::string p_label(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os << p;
  return os.str();
}

Estimate root_of_moment(const Estimate& m, double p) {
  if (!std::isfinite(m.value)) throw Error(ErrorCode::kInfiniteMoment, "moment is not finite");
  if (m.value <= 0.0) return Estimate{0.0, 0.0, m.n_samples, m.n_batches, m.seed, m.flagged};
  const double h = std::pow(m.value, 1.0 / p);
  return propagate(m, h, h / (p * m.value));
}

// Constant c_p with Z_p = c_p M^{1/2} B for elliptical measures.
double elliptical_factor(const measures::Elliptical& e, double p) {
  return std::pow(e.abs_moment_unit(p), 1.0 / p);
}

class CentroidBody final : public bodies::Body {
 public:
  CentroidBody(std::shared_ptr<const MeasureEvaluator> mu, double p)
      : mu_(std::move(mu)), p_(p) {}

  int dim() const override { return mu_->dim(); }
  bool symmetric() const override { return true; }
  bool has_support() const override { return true; }
  std::string describe() const override {
    return "Z_" + p_label(p_) + "(" + mu_->spec().describe() + ")";
  }

  Estimate support(const Vec& u) const override { return root_of_moment(mu_->moment(u, p_), p_); }

  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    const auto mg = mu_->moment_gradient(u, p_);
    const Estimate h = root_of_moment(mg.value, p_);
    if (h.value <= 0.0) return std::nullopt;
    const double m = mg.value.value;
    return SupportGradient{h, (h.value / (p_ * m)) * mg.gradient};
  }

  std::optional<double> exact_volume_radius() const override {
    const int n = dim();
    if (const auto& e = mu_->elliptical_form()) {
      const auto ld = numerics::logdet_spd(e->shape);
      if (!ld) return 0.0;
      return elliptical_factor(*e, p_) * std::exp(*ld / (2.0 * n));
    }
    if (p_ == 2.0) {
      const auto ld = numerics::logdet_spd(measures::second_moment(mu_->spec()));
      if (!ld) return 0.0;
      return std::exp(*ld / (2.0 * n));
    }
    return std::nullopt;
  }

  double p() const { return p_; }
  const MeasureEvaluator& measure() const { return *mu_; }

 private:
  std::shared_ptr<const MeasureEvaluator> mu_;
  double p_;
};

bodies::BodyHandle z_infinity(const MeasureSpec& mu) {
  if (!measures::compactly_supported(mu)) {
    throw Error(ErrorCode::kInvalidArgument, "Z_inf needs a compactly supported measure");
  }
  bodies::SupportClosure c;
  c.dim = mu.dim();
  c.symmetric = true;
  c.name = "Z_inf(" + mu.describe() + ")";
  c.support = [mu](const Vec& u) {
    return Estimate::exact(
        std::max(measures::support_of_support(mu, u), measures::support_of_support(mu, -u)));
  };
  return bodies::make_support_body(std::move(c));
}

std::size_t default_directions(int n) {
  if (n <= 2) return 720;
  if (n == 3) return 2048;
  return 4096;
}

// Largest eigenvalue of the Z_p shape in closed form, when available.
std::optional<double> exact_diameter(const MeasureEvaluator& mu, double p) {
  if (const auto& e = mu.elliptical_form()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(e->shape);
    return 2.0 * elliptical_factor(*e, p) * std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  if (p == 2.0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(measures::second_moment(mu.spec()));
    return 2.0 * std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  return std::nullopt;
}

}  // namespace

bodies::BodyHandle zp_body(std::shared_ptr<const MeasureEvaluator> mu, double p) {
  if (std::isinf(p) && p > 0.0) return z_infinity(mu->spec());
  require_p(p);
  return std::make_shared<CentroidBody>(std::move(mu), p);
}

bodies::BodyHandle zp_body(const MeasureSpec& mu, double p, const McConfig& mc) {
  if (std::isinf(p) && p > 0.0) return z_infinity(mu);
  return zp_body(std::make_shared<const MeasureEvaluator>(mu, mc), p);
}

Estimate zp_support(const MeasureEvaluator& mu, const Vec& theta, double p) {
  require_p(p);
  return root_of_moment(mu.moment(theta, p), p);
}

bodies::DiameterResult zp_diam_search(std::shared_ptr<const MeasureEvaluator> mu, double p,
                                      const bodies::DiameterConfig& cfg) {
  require_p(p);
  if (auto d = exact_diameter(*mu, p)) {
    bodies::DiameterResult r;
    r.value = Estimate::exact(*d);
    r.net_value = *d;
    r.upper_bound = *d;
    r.converged = true;
    return r;
  }
  const CentroidBody body(std::move(mu), p);
  return bodies::diameter_search(body, cfg);
}

Estimate zp_diam(const MeasureSpec& mu, double p, const McConfig& mc) {
  return zp_diam_search(std::make_shared<const MeasureEvaluator>(mu, mc), p).value;
}

VradSandwich vrad_sandwich(const bodies::Body& body, std::size_t directions, std::uint64_t seed) {
  const int n = body.dim();
  VradSandwich out;
  if (n == 1) {
    Vec e(1);
    e << 1.0;
    Estimate a = body.support(e);
    const Estimate b = body.support(-e);
    a.value = 0.5 * (a.value + b.value);
    a.std_error = 0.5 * (a.std_error + b.std_error);
    out.inner = out.outer = a.value;
    out.value = a;
    return out;
  }
  if (n > 6) throw Error(ErrorCode::kDimTooLarge, "hull route is limited to dim <= 6");
  if (directions == 0) directions = default_directions(n);
  const bodies::DirectionNet net = bodies::make_net(n, directions, seed);
  const auto count = static_cast<Eigen::Index>(net.count);
  Mat inner(n, count);
  Mat dual(n, count);
  double rel_err = 0.0;
  Estimate meta;
  for (Eigen::Index i = 0; i < count; ++i) {
    const Vec u = net.directions.col(i);
    const auto sg = body.support_gradient(u);
    if (!sg) {
      throw Error(ErrorCode::kNonSmoothAtDirection, body.describe() + " has no support gradient");
    }
    if (!(sg->value.value > 0.0)) {
      throw Error(ErrorCode::kOriginNotInterior, "support is not positive in every direction");
    }
    inner.col(i) = sg->gradient;
    dual.col(i) = u / sg->value.value;
    rel_err += sg->value.std_error / sg->value.value;
    meta = sg->value;
  }
  rel_err /= static_cast<double>(count);
  out.inner = bodies::vrad_hull(inner);
  // Outer polytope {x : <x, u_i> <= h(u_i)} through its radial function
  // 1 / max_i <theta, u_i / h(u_i)>, averaged over an independent sphere sample.
  const std::size_t probes = 16384;
  const Mat theta = bodies::uniform_directions(n, probes, derive_seed(seed, 0x0a7e));
  std::vector<double> rn(probes);
  const std::size_t block = 1024;
  for (std::size_t b0 = 0; b0 < probes; b0 += block) {
    const auto len = static_cast<Eigen::Index>(std::min(block, probes - b0));
    const Mat dots = dual.transpose() * theta.middleCols(static_cast<Eigen::Index>(b0), len);
    for (Eigen::Index j = 0; j < len; ++j) {
      rn[b0 + static_cast<std::size_t>(j)] = std::pow(dots.col(j).maxCoeff(), -n);
    }
  }
  const std::vector<double> ones(probes, 1.0);
  const Estimate mean = batch_mean(rn, ones, 16, seed);
  out.outer = std::pow(mean.value, 1.0 / n);
  const double outer_err = out.outer * mean.std_error / (n * mean.value);
  // Inner and outer errors of a fine net are roughly 2:1 in volume.
  out.value = meta;
  out.value.value = std::pow(out.inner, 1.0 / 3.0) * std::pow(out.outer, 2.0 / 3.0);
  out.value.std_error =
      0.5 * std::fabs(out.outer - out.inner) + outer_err + rel_err * out.value.value;
  return out;
}

Estimate zp_vrad(std::shared_ptr<const MeasureEvaluator> mu, double p, const VradConfig& cfg) {
  require_p(p);
  const int n = mu->dim();
  const CentroidBody body(std::move(mu), p);
  if (cfg.route == VradRoute::kAuto) {
    if (auto v = body.exact_volume_radius()) return Estimate::exact(*v);
  }
  const bool hull = cfg.route == VradRoute::kHull || (cfg.route == VradRoute::kAuto && n <= 6);
  if (hull) return vrad_sandwich(body, cfg.directions, cfg.seed).value;
  bodies::SphereConfig sc;
  sc.directions = cfg.directions;
  sc.seed = cfg.seed;
  return bodies::vrad_radial(body, sc);
}

Estimate zp_vrad(const MeasureSpec& mu, double p, const McConfig& mc, const VradConfig& cfg) {
  return zp_vrad(std::make_shared<const MeasureEvaluator>(mu, mc), p, cfg);
}

PsiAlphaResult psi_alpha_constant(const MeasureEvaluator& mu, double alpha,
                                  const std::vector<double>& p_grid, std::size_t net_size,
                                  std::uint64_t seed) {
  if (!(alpha >= 1.0 && alpha <= 2.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [1, 2]");
  }
  if (p_grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty p grid");
  for (double p : p_grid) {
    if (!(p >= 2.0)) throw Error(ErrorCode::kInvalidArgument, "grid points must be >= 2");
  }
  const int n = mu.dim();
  if (net_size == 0) net_size = n == 1 ? 2 : (n == 2 ? 360 : 512);
  const bodies::DirectionNet net = bodies::make_net(n, net_size, seed);
  PsiAlphaResult res;
  res.grid = p_grid;
  res.net_size = net.count;
  double best = -1.0;
  for (Eigen::Index i = 0; i < net.directions.cols(); ++i) {
    const Vec u = net.directions.col(i);
    const Estimate h2 = zp_support(mu, u, 2.0);
    if (!(h2.value > 0.0)) continue;
    for (double p : p_grid) {
      const Estimate hp = zp_support(mu, u, p);
      const double r = hp.value / (std::pow(p, 1.0 / alpha) * h2.value);
      if (r > best) {
        best = r;
        res.value = hp;
        res.value.value = r;
        res.value.std_error = r * (hp.std_error / hp.value + h2.std_error / h2.value);
        res.p_at = p;
        res.theta_at = u;
      }
    }
  }
  return res;
}

Estimate iq_norm(const MeasureEvaluator& mu, double q) {
  if (!(q >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "q must be >= 1");
  return root_of_moment(mu.norm_moment(q), q);
}

Estimate iq_norm(const MeasureSpec& mu, double q, const McConfig& mc) {
  return iq_norm(MeasureEvaluator(mu, mc), q);
}

}  // namespace clab::centroid
