#include "clab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clab/error.hpp"
#include "clab/numerics.hpp"

namespace clab::metrics {

namespace {

double upper_q(const MeasureEvaluator& mu, const QSharpConfig& cfg) {
  return cfg.q_max > 0.0 ? cfg.q_max : static_cast<double>(mu.dim());
}

void validate(const QSharpConfig& cfg) {
  if (!(cfg.c_sharp > 0.0)) throw Error(ErrorCode::kInvalidArgument, "c_sharp must be positive");
  if (!(cfg.q_min >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "q_min must be >= 1");
  if (!(cfg.rtol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "rtol must be positive");
}

void require_isotropic(const MeasureSpec& mu, double tol) {
  const int n = mu.dim();
  const double bary = measures::barycenter(mu).cwiseAbs().maxCoeff();
  const double dev = (measures::covariance(mu) - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
  if (bary > tol || dev > tol) {
    throw Error(ErrorCode::kNotIsotropic, "measure is not isotropic; whiten it first");
  }
}

std::shared_ptr<const MeasureEvaluator> make_eval(const MeasureSpec& mu, const McConfig& mc) {
  return std::make_shared<const MeasureEvaluator>(mu, mc);
}

}  // namespace

double det_cov_root(const MeasureSpec& mu) {
  const auto ld = numerics::logdet_spd(measures::covariance(mu));
  if (!ld) return 0.0;
  return std::exp(*ld / (2.0 * mu.dim()));
}

Estimate isotropic_constant(const MeasureSpec& mu) {
  const int n = mu.dim();
  const double sup = measures::density_sup(mu);
  const auto ld = numerics::logdet_spd(measures::covariance(mu));
  if (!ld) throw Error(ErrorCode::kInvalidArgument, "covariance is singular");
  return Estimate::exact(std::exp(std::log(sup) / n + *ld / (2.0 * n)));
}

KStar kstar(const bodies::Body& body, const bodies::SphereConfig& sphere,
            const bodies::DiameterConfig& diam) {
  KStar out;
  out.mean_width = bodies::mean_width(body, 1.0, sphere);
  out.diameter = bodies::diameter(body, diam);
  const double n = body.dim();
  const double w = out.mean_width.value;
  const double d = out.diameter.value;
  out.value = out.mean_width;
  out.value.value = n * (w / d) * (w / d);
  out.value.std_error = out.value.value * 2.0 *
                        (out.mean_width.std_error / w + out.diameter.std_error / d);
  out.value.flagged = out.mean_width.flagged || out.diameter.flagged;
  return out;
}

// ---------------------------------------------------------------- Delta curve

DeltaCurve::DeltaCurve(std::shared_ptr<const MeasureEvaluator> mu, bodies::DiameterConfig cfg)
    : mu_(std::move(mu)), cfg_(std::move(cfg)) {}

Estimate DeltaCurve::operator()(double q) {
  if (auto it = cache_.find(q); it != cache_.end()) return it->second;
  bodies::DiameterConfig cfg = cfg_;
  if (warm_.size() > 0) cfg.warm_starts.push_back(warm_);
  const bodies::DiameterResult r = centroid::zp_diam_search(mu_, q, cfg);
  if (r.argmax.size() > 0) warm_ = r.argmax;
  cache_.emplace(q, r.value);
  return r.value;
}

DeltaCurve::Root DeltaCurve::last_below(double level, double lo, double hi, double rtol) {
  Root root;
  const Estimate at_lo = (*this)(lo);
  root.flagged = at_lo.flagged;
  if (at_lo.value > level) {
    root.q = root.lo = root.hi = lo;
    root.clamped_low = true;
    return root;
  }
  if (hi <= lo) {
    root.q = root.lo = root.hi = lo;
    root.clamped_high = true;
    return root;
  }
  const Estimate at_hi = (*this)(hi);
  root.flagged = root.flagged || at_hi.flagged;
  if (at_hi.value <= level) {
    root.q = root.lo = root.hi = hi;
    root.clamped_high = true;
    return root;
  }
  // Earlier evaluations narrow the bracket for free.
  for (const auto& [q, d] : cache_) {
    if (q <= lo || q >= hi) continue;
    if (d.value <= level) {
      lo = std::max(lo, q);
    } else {
      hi = std::min(hi, q);
    }
  }
  while (hi - lo > rtol * hi) {
    const double mid = 0.5 * (lo + hi);
    const Estimate d = (*this)(mid);
    root.flagged = root.flagged || d.flagged;
    (d.value <= level ? lo : hi) = mid;
  }
  root.q = lo;
  root.lo = lo;
  root.hi = hi;
  return root;
}

// ---------------------------------------------------------------- q sharp

QSharpResult q_sharp(DeltaCurve& delta, const QSharpConfig& cfg) {
  validate(cfg);
  const MeasureEvaluator& mu = delta.measure();
  const int n = mu.dim();
  QSharpResult out;
  out.threshold = cfg.c_sharp * std::sqrt(static_cast<double>(n)) * det_cov_root(mu.spec());
  const auto root = delta.last_below(out.threshold, cfg.q_min, upper_q(mu, cfg), cfg.rtol);
  out.value = Estimate::exact(root.q);
  out.value.std_error = root.hi - root.lo;
  out.value.flagged = root.flagged;
  out.clamped_low = root.clamped_low;
  out.clamped_high = root.clamped_high;
  return out;
}

QSharpResult q_sharp(const MeasureSpec& mu, const QSharpConfig& cfg, const McConfig& mc) {
  DeltaCurve delta(make_eval(mu, mc), cfg.diameter);
  return q_sharp(delta, cfg);
}

GeometricResult q_sharp_geometric(DeltaCurve& delta, const QSharpConfig& cfg) {
  validate(cfg);
  const MeasureEvaluator& mu = delta.measure();
  require_isotropic(mu.spec(), cfg.isotropy_tol);
  const int n = mu.dim();
  const double hi = upper_q(mu, cfg);
  GeometricResult out;
  double log_ratio = 0.0;
  double log_root = 0.0;
  double spread = 0.0;
  bool flagged = false;
  for (int k = 1; k <= n; ++k) {
    const auto root =
        delta.last_below(cfg.c_sharp * std::sqrt(static_cast<double>(k)), cfg.q_min, hi, cfg.rtol);
    out.roots.push_back(root.q);
    out.clamped.push_back(root.clamped_low || root.clamped_high);
    log_ratio += std::log(root.q / k);
    log_root += std::log(root.q);
    spread += (root.hi - root.lo) / root.q;
    flagged = flagged || root.flagged;
  }
  out.value = Estimate::exact(n * std::exp(log_ratio / n));
  out.value.std_error = out.value.value * spread / n;
  out.value.flagged = flagged;
  out.plain_mean = std::exp(log_root / n);
  out.product_bound = std::exp(-0.5 * log_ratio / n);
  return out;
}

GeometricResult q_sharp_geometric(const MeasureSpec& mu, const QSharpConfig& cfg,
                                  const McConfig& mc) {
  DeltaCurve delta(make_eval(mu, mc), cfg.diameter);
  return q_sharp_geometric(delta, cfg);
}

HereditaryResult q_sharp_hereditary(DeltaCurve& delta, const QSharpConfig& cfg) {
  validate(cfg);
  const MeasureEvaluator& mu = delta.measure();
  require_isotropic(mu.spec(), cfg.isotropy_tol);
  const int n = mu.dim();
  HereditaryResult out;
  out.q_sharp = q_sharp(delta, cfg).value.value;
  out.grid = numerics::geometric_grid(cfg.q_min, std::max(cfg.q_min, out.q_sharp), cfg.grid_ratio);
  // The per-k roots refine the grid at the points where the inf over k is attained.
  const GeometricResult g = q_sharp_geometric(delta, cfg);
  for (double r : g.roots) {
    if (r >= cfg.q_min && r <= out.q_sharp) out.grid.push_back(r);
  }
  std::sort(out.grid.begin(), out.grid.end());
  out.grid.erase(std::unique(out.grid.begin(), out.grid.end()), out.grid.end());
  double best = std::numeric_limits<double>::infinity();
  Estimate at;
  for (double q : out.grid) {
    const Estimate d = delta(q);
    const double v = cfg.c_sharp * cfg.c_sharp * q / (d.value * d.value);
    if (v < best) {
      best = v;
      at = d;
      out.argmin_q = q;
    }
  }
  out.value = at;
  out.value.value = n * best;
  out.value.std_error = at.value > 0.0 ? 2.0 * n * best * at.std_error / at.value : 0.0;
  return out;
}

HereditaryResult q_sharp_hereditary(const MeasureSpec& mu, const QSharpConfig& cfg,
                                    const McConfig& mc) {
  DeltaCurve delta(make_eval(mu, mc), cfg.diameter);
  return q_sharp_hereditary(delta, cfg);
}

Properties check_properties(const MeasureSpec& mu, double q, double delta, double pw_c,
                            const McConfig& mc) {
  const int n = mu.dim();
  if (!(q >= 1.0 && q <= n)) throw Error(ErrorCode::kInvalidArgument, "q must lie in [1, dim]");
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  const auto eval = make_eval(mu, mc);
  const auto body = centroid::zp_body(eval, q);
  Properties p;
  p.diameter = centroid::zp_diam_search(eval, q).value.value;
  p.mean_width = bodies::mean_width(*body).value;
  p.kstar = n * (p.mean_width / p.diameter) * (p.mean_width / p.diameter);
  p.det_cov_root = det_cov_root(mu);
  const double rn = std::sqrt(static_cast<double>(n));
  p.p1 = p.kstar >= q / (delta * delta);
  p.p1_prime = p.diameter <= delta * rn * p.mean_width / std::sqrt(q);
  p.p2 = p.diameter <= delta * rn * p.det_cov_root;
  p.pw = p.mean_width >= pw_c * std::sqrt(q) * p.det_cov_root;
  return p;
}

}  // namespace clab::metrics
