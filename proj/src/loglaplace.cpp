#include "clab/loglaplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "clab/error.hpp"
#include "clab/rng.hpp"

namespace clab::loglaplace {

using namespace clab::measures;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct Lam {
  double v = 0.0;
  Vec g;
  Mat h;
};

// phi(a) = log(sinh(a) / a) and its first two derivatives.
double phi0(double a) {
  const double x = std::fabs(a);
  if (x < 1.0) {
    // (sinh x - x) / x by its Taylor series.
    const double x2 = x * x;
    double term = x2 / 6.0;
    double sum = term;
    for (int k = 2; k < 20; ++k) {
      term *= x2 / ((2.0 * k) * (2.0 * k + 1.0));
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return std::log1p(sum);
  }
  return x - std::log(2.0 * x) + std::log1p(-std::exp(-2.0 * x));
}

double phi1(double a) {
  const double x = std::fabs(a);
  double r;
  if (x < 0.1) {
    const double x2 = x * x;
    r = x * (1.0 / 3.0 - x2 * (1.0 / 45.0 - x2 * (2.0 / 945.0 - x2 * (1.0 / 4725.0 - x2 * 2.0 / 93555.0))));
  } else {
    r = 1.0 / std::tanh(x) - 1.0 / x;
  }
  return a < 0.0 ? -r : r;
}

double phi2(double a) {
  const double x = std::fabs(a);
  if (x < 0.1) {
    const double x2 = x * x;
    return 1.0 / 3.0 - x2 * (1.0 / 15.0 - x2 * (2.0 / 189.0 - x2 * (1.0 / 675.0 - x2 * 2.0 / 10395.0)));
  }
  const double sh = std::sinh(x);
  return 1.0 / (x * x) - (std::isfinite(sh) ? 1.0 / (sh * sh) : 0.0);
}

Lam cube_lam(const UniformCube& c, const Vec& xi, int order) {
  Lam out;
  const double hw = c.halfwidth;
  if (order >= 1) out.g.resize(c.dim);
  if (order >= 2) out.h = Mat::Zero(c.dim, c.dim);
  for (int i = 0; i < c.dim; ++i) {
    const double a = hw * xi[i];
    out.v += phi0(a);
    if (order >= 1) out.g[i] = hw * phi1(a);
    if (order >= 2) out.h(i, i) = hw * hw * phi2(a);
  }
  return out;
}

Lam ball_lam(const UniformBall& b, const Vec& xi, int order) {
  const int n = b.dim;
  const double r = b.radius;
  const double s = xi.norm();
  Lam out;
  if (s == 0.0) {
    out.g = Vec::Zero(n);
    out.h = Mat::Identity(n, n) * (r * r / (n + 2.0));
    return out;
  }
  const double a = r * s;
  const double e = 0.5 * (n - 1);
  const double norm = numerics::ball_marginal_norm(n);
  auto w = [e, norm](double t) {
    return e == 0.0 ? 1.0 / norm : std::pow(std::max(0.0, 1.0 - t * t), e) / norm;
  };
  auto quad = [](const std::function<double(double)>& f) {
    return numerics::integrate_endpoint_singular(f, -1.0, 1.0);
  };
  double mean = 0.0;
  double var = 0.0;
  if (a <= 1.0) {
    const double excess = quad([&](double t) {
      const double sh = std::sinh(0.5 * a * t);
      return 2.0 * sh * sh * w(t);
    });
    out.v = std::log1p(excess);
    if (order >= 1) {
      const double z = 1.0 + excess;
      mean = quad([&](double t) { return t * std::sinh(a * t) * w(t); }) / z;
      if (order >= 2) {
        var = quad([&](double t) {
                return (t - mean) * (t - mean) * std::exp(a * t) * w(t);
              }) / z;
      }
    }
  } else {
    const double i0 = quad([&](double t) { return std::exp(a * (t - 1.0)) * w(t); });
    out.v = a + std::log(i0);
    if (order >= 1) {
      const double d =
          quad([&](double t) { return (1.0 - t) * std::exp(a * (t - 1.0)) * w(t); }) / i0;
      mean = 1.0 - d;
      if (order >= 2) {
        var = quad([&](double t) {
                return (t - mean) * (t - mean) * std::exp(a * (t - 1.0)) * w(t);
              }) / i0;
      }
    }
  }
  if (order >= 1) {
    const Vec u = xi / s;
    out.g = r * mean * u;
    if (order >= 2) {
      const Mat uu = u * u.transpose();
      out.h = r * r * var * uu + (r * r * mean / a) * (Mat::Identity(n, n) - uu);
    }
  }
  return out;
}

// Laplace transform of a mixture of uniform simplices. cones[c] holds the
// n+1 vertices as columns and masses[c] its probability.
Lam simplex_mixture_lam(const std::vector<Mat>& cones, const std::vector<double>& masses,
                        const Vec& xi, int order) {
  const int n = static_cast<int>(xi.size());
  const double logfact = std::lgamma(n + 1.0);
  std::vector<Vec> z(cones.size());
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cones.size(); ++c) {
    z[c] = cones[c].transpose() * xi;
    zmax = std::max(zmax, z[c].maxCoeff());
  }
  std::vector<double> nodes;
  auto dd = [&](const Vec& zc, int rep1, int rep2) {
    nodes.clear();
    for (Eigen::Index j = 0; j < zc.size(); ++j) {
      nodes.push_back(zc[j] - zmax);
      if (j == rep1) nodes.push_back(zc[j] - zmax);
      if (j == rep2) nodes.push_back(zc[j] - zmax);
    }
    return exp_divided_difference(nodes);
  };
  double m = 0.0;
  Vec gm = Vec::Zero(n);
  for (std::size_t c = 0; c < cones.size(); ++c) {
    m += masses[c] * dd(z[c], -1, -1);
    if (order >= 1) {
      for (int j = 0; j <= n; ++j) gm += masses[c] * dd(z[c], j, -1) * cones[c].col(j);
    }
  }
  Lam out;
  out.v = zmax + logfact + std::log(m);
  if (order >= 1) out.g = gm / m;
  if (order >= 2) {
    Mat h = Mat::Zero(n, n);
    for (std::size_t c = 0; c < cones.size(); ++c) {
      const Mat v = cones[c].colwise() - out.g;
      for (int j = 0; j <= n; ++j) {
        h += masses[c] * 2.0 * dd(z[c], j, j) * v.col(j) * v.col(j).transpose();
        for (int k = j + 1; k <= n; ++k) {
          const Mat vv = v.col(j) * v.col(k).transpose();
          h += masses[c] * dd(z[c], j, k) * (vv + vv.transpose());
        }
      }
    }
    out.h = h / m;
    out.h = 0.5 * (out.h + out.h.transpose());
  }
  return out;
}

Lam empirical_lam(const Mat& points, const Vec& weights, const Vec& xi, int order) {
  const Vec t = points.transpose() * xi;
  const double tmax = t.maxCoeff();
  const Vec p = (weights.array() * (t.array() - tmax).exp()).matrix();
  const double s = p.sum();
  Lam out;
  out.v = tmax + std::log(s);
  if (order >= 1) out.g = points * p / s;
  if (order >= 2) {
    const Mat c = points.colwise() - out.g;
    out.h = c * (p / s).asDiagonal() * c.transpose();
  }
  return out;
}

Lam lam(const MeasureSpec& spec, const Vec& xi, int order);

Lam lam_node(const MeasureSpec& spec, const Vec& xi, int order) {
  return std::visit(
      Overloaded{
          [&](const Gaussian& g) {
            Lam out;
            const Vec sx = g.covariance * xi;
            out.v = 0.5 * xi.dot(sx);
            if (order >= 1) out.g = sx;
            if (order >= 2) out.h = g.covariance;
            return out;
          },
          [&](const UniformCube& c) { return cube_lam(c, xi, order); },
          [&](const UniformBall& b) { return ball_lam(b, xi, order); },
          [&](const UniformSimplex& s) {
            Mat v = Mat::Zero(s.dim, s.dim + 1);
            v.rightCols(s.dim).setIdentity();
            return simplex_mixture_lam({v}, {1.0}, xi, order);
          },
          [&](const UniformPolytope& p) {
            const ConvexHull& hull = *p.hull;
            std::vector<Mat> cones;
            std::vector<double> masses;
            for (std::size_t f = 0; f < hull.facets().size(); ++f) {
              Mat v(hull.dim(), hull.dim() + 1);
              v.col(0) = hull.interior_point();
              for (int k = 0; k < hull.dim(); ++k) {
                v.col(k + 1) = hull.points().col(hull.facets()[f].vertices[k]);
              }
              cones.push_back(std::move(v));
              masses.push_back(hull.cone_volumes()[f] / hull.volume());
            }
            return simplex_mixture_lam(cones, masses, xi, order);
          },
          [&](const Product& p) {
            Lam out;
            if (order >= 1) out.g.resize(p.dim);
            if (order >= 2) out.h = Mat::Zero(p.dim, p.dim);
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              const int k = p.parts[j].dim();
              const Lam part = lam(p.parts[j], xi.segment(p.offsets[j], k), order);
              out.v += part.v;
              if (order >= 1) out.g.segment(p.offsets[j], k) = part.g;
              if (order >= 2) out.h.block(p.offsets[j], p.offsets[j], k, k) = part.h;
            }
            return out;
          },
          [&](const AffineImage& a) {
            Lam base = lam(a.base, a.matrix.transpose() * xi, order);
            Lam out;
            out.v = base.v + a.shift.dot(xi);
            if (order >= 1) out.g = a.matrix * base.g + a.shift;
            if (order >= 2) out.h = a.matrix * base.h * a.matrix.transpose();
            return out;
          },
          [&](const Projection& pr) {
            Lam base = lam(pr.base, pr.basis.transpose() * xi, order);
            Lam out;
            out.v = base.v;
            if (order >= 1) out.g = pr.basis * base.g;
            if (order >= 2) out.h = pr.basis * base.h * pr.basis.transpose();
            return out;
          },
          [&](const Tilt& t) {
            Lam base = lam(t.base, xi + t.xi, order);
            Lam out;
            out.v = base.v - t.log_partition - xi.dot(t.center);
            if (order >= 1) out.g = base.g - t.center;
            if (order >= 2) out.h = base.h;
            return out;
          },
          [&](const Empirical& e) { return empirical_lam(e.points, e.weights, xi, order); },
      },
      spec.node().v);
}

Lam lam(const MeasureSpec& spec, const Vec& xi, int order) {
  Lam out = lam_node(spec, xi, order);
  if (!std::isfinite(out.v)) {
    throw Error(ErrorCode::kOutsideDomain, "log-Laplace transform diverges at xi");
  }
  return out;
}

bool uses_quadrature(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const UniformBall&) { return true; },
          [](const UniformSimplex&) { return true; },
          [](const UniformPolytope&) { return true; },
          [](const Product& p) {
            return std::any_of(p.parts.begin(), p.parts.end(), uses_quadrature);
          },
          [](const AffineImage& a) { return uses_quadrature(a.base); },
          [](const Projection& p) { return uses_quadrature(p.base); },
          [](const Tilt& t) { return uses_quadrature(t.base); },
          [](const auto&) { return false; },
      },
      spec.node().v);
}

bool uses_empirical(const MeasureSpec& spec) {
  return std::visit(
      Overloaded{
          [](const Empirical&) { return true; },
          [](const Product& p) {
            return std::any_of(p.parts.begin(), p.parts.end(), uses_empirical);
          },
          [](const AffineImage& a) { return uses_empirical(a.base); },
          [](const Projection& p) { return uses_empirical(p.base); },
          [](const Tilt& t) { return uses_empirical(t.base); },
          [](const auto&) { return false; },
      },
      spec.node().v);
}

class LambdaLevelBody final : public bodies::Body {
 public:
  LambdaLevelBody(std::shared_ptr<const LambdaEvaluator> lam, double p, LevelSetConfig cfg)
      : lam_(std::move(lam)), p_(p), cfg_(cfg) {
    if (cfg_.rtol <= 0.0) cfg_.rtol = lam_->exact() ? 1e-10 : 1e-6;
  }
  int dim() const override { return lam_->dim(); }
  bool symmetric() const override { return true; }
  bool has_support() const override { return false; }
  bool has_radial() const override { return true; }
  std::string describe() const override {
    std::ostringstream os;
    os << "lambda_" << p_ << "(" << lam_->spec().describe() << ")";
    return os.str();
  }

  Estimate radial(const Vec& u) const override {
    const double norm = u.norm();
    const Vec th = u / norm;
    auto level = [&](double t) {
      return std::max(lam_->value(t * th).value, lam_->value(-t * th).value) - p_;
    };
    double lo = 0.0;
    double hi = 1.0;
    if (level(1.0) <= 0.0) {
      lo = 1.0;
      hi = 2.0;
      int k = 0;
      while (level(hi) <= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++k > cfg_.max_doublings) {
          throw Error(ErrorCode::kRootBracketFailure,
                      "level set ray did not exceed the level within the expansion budget");
        }
      }
    } else {
      lo = 0.5;
      int k = 0;
      while (level(lo) > 0.0) {
        hi = lo;
        lo *= 0.5;
        if (++k > 1000) return Estimate::exact(0.0);
      }
    }
    while (hi - lo > cfg_.rtol * hi) {
      const double mid = 0.5 * (lo + hi);
      (level(mid) > 0.0 ? hi : lo) = mid;
    }
    const double r = 0.5 * (lo + hi);
    if (lam_->exact()) return Estimate::exact(r / norm);
    // Error bar from the slope of Lambda along the ray at the active side.
    const Evaluation plus = lam_->evaluate(r * th, 1);
    const Evaluation minus = lam_->evaluate(-r * th, 1);
    const bool use_plus = plus.value.value >= minus.value.value;
    const Evaluation& act = use_plus ? plus : minus;
    const double slope = std::fabs(act.gradient.dot(use_plus ? th : Vec(-th)));
    Estimate e = act.value;
    e.value = r / norm;
    e.std_error = slope > 0.0 ? act.value.std_error / slope / norm : 0.0;
    return e;
  }

 private:
  std::shared_ptr<const LambdaEvaluator> lam_;
  double p_;
  LevelSetConfig cfg_;
};

}  // namespace

// ---------------------------------------------------------------- divided differences

double exp_divided_difference(std::span<const double> nodes) {
  const int m = static_cast<int>(nodes.size()) - 1;
  if (m < 0) throw Error(ErrorCode::kInvalidArgument, "no nodes");
  if (m == 0) return std::exp(nodes[0]);
  const auto [mn, mx] = std::minmax_element(nodes.begin(), nodes.end());
  const double c = 0.5 * (*mn + *mx);
  const double spread = 0.5 * (*mx - *mn);
  int s = 0;
  if (spread > 0.5) s = static_cast<int>(std::ceil(std::log2(spread / 0.5)));
  const double scale = std::ldexp(1.0, -s);
  const int size = m + 1;
  Mat a = Mat::Zero(size, size);
  for (int i = 0; i < size; ++i) {
    a(i, i) = (nodes[i] - c) * scale;
    if (i + 1 < size) a(i, i + 1) = scale;
  }
  // Taylor series of the scaled bidiagonal matrix; entries of the result are
  // positive, so the squarings below lose no relative accuracy.
  Mat t = Mat::Identity(size, size);
  Mat term = Mat::Identity(size, size);
  for (int k = 1; k < size + 40; ++k) {
    term = (term * a / k).triangularView<Eigen::Upper>();
    t += term;
  }
  for (int k = 0; k < s; ++k) t = (t * t).triangularView<Eigen::Upper>();
  return std::exp(c) * t(0, m);
}

// ---------------------------------------------------------------- evaluator

LambdaEvaluator::LambdaEvaluator(MeasureSpec spec, Mode mode, McConfig mc)
    : spec_(std::move(spec)), mode_(mode), mc_(mc) {
  if (!spec_.valid()) throw Error(ErrorCode::kInvalidArgument, "invalid spec");
}

std::string LambdaEvaluator::mode_name() const {
  if (mode_ == Mode::kMonteCarlo) return "monte-carlo";
  if (uses_empirical(spec_)) return "empirical";
  return uses_quadrature(spec_) ? "quadrature" : "closed-form";
}

const WeightedSample& LambdaEvaluator::mc_sample() const {
  std::call_once(once_, [this] {
    sample_ = std::make_shared<WeightedSample>(sample(spec_, mc_.samples, mc_.seed));
  });
  return *sample_;
}

Evaluation LambdaEvaluator::evaluate(const Vec& xi, int order) const {
  if (xi.size() != dim()) throw Error(ErrorCode::kInvalidArgument, "xi dimension mismatch");
  Evaluation out;
  if (mode_ == Mode::kAuto) {
    Lam l = lam(spec_, xi, order);
    out.value = Estimate::exact(l.v);
    out.gradient = std::move(l.g);
    out.hessian = std::move(l.h);
    return out;
  }
  const WeightedSample& s = mc_sample();
  Lam l = empirical_lam(s.points, s.weights, xi, order);
  if (!std::isfinite(l.v)) throw Error(ErrorCode::kOutsideDomain, "empirical transform overflow");
  const Vec t = s.points.transpose() * xi;
  const double tmax = t.maxCoeff();
  std::vector<double> vals(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    vals[static_cast<std::size_t>(i)] = std::exp(t[i] - tmax);
  }
  const Estimate mean = batch_mean(vals, std::span<const double>(s.weights.data(), t.size()),
                                   mc_.batches, s.seed);
  out.value = propagate(mean, l.v, 1.0 / mean.value);
  out.value.flagged = s.low_ess;
  out.gradient = std::move(l.g);
  out.hessian = std::move(l.h);
  return out;
}

Estimate LambdaEvaluator::value(const Vec& xi) const { return evaluate(xi, 0).value; }

Derivatives LambdaEvaluator::derivatives(const Vec& xi) const {
  Evaluation e = evaluate(xi, 2);
  return Derivatives{std::move(e.gradient), std::move(e.hessian)};
}

Estimate lambda_eval(const MeasureSpec& spec, const Vec& xi, Mode mode, const McConfig& mc) {
  return LambdaEvaluator(spec, mode, mc).value(xi);
}

Derivatives lambda_derivatives(const MeasureSpec& spec, const Vec& xi, Mode mode,
                               const McConfig& mc) {
  return LambdaEvaluator(spec, mode, mc).derivatives(xi);
}

// ---------------------------------------------------------------- tilts

MeasureSpec tilt(const MeasureSpec& spec, const Vec& xi) {
  if (xi.size() != spec.dim()) throw Error(ErrorCode::kInvalidArgument, "xi dimension mismatch");
  if (!xi.allFinite()) throw Error(ErrorCode::kTiltOutsideDomain, "xi is not finite");
  if (xi.cwiseAbs().maxCoeff() == 0.0) return spec;
  return std::visit(
      Overloaded{
          [&](const Gaussian&) { return spec; },
          [&](const Product& p) {
            std::vector<MeasureSpec> parts;
            for (std::size_t j = 0; j < p.parts.size(); ++j) {
              parts.push_back(tilt(p.parts[j], xi.segment(p.offsets[j], p.parts[j].dim())));
            }
            return MeasureSpec::product(std::move(parts));
          },
          [&](const AffineImage& a) {
            return MeasureSpec::affine(tilt(a.base, a.matrix.transpose() * xi), a.matrix,
                                       Vec::Zero(xi.size()));
          },
          [&](const Projection& pr) {
            return MeasureSpec::make_projection(tilt(pr.base, pr.basis.transpose() * xi),
                                                pr.basis);
          },
          [&](const Tilt& t) { return tilt(t.base, t.xi + xi); },
          [&](const auto&) {
            Lam l;
            try {
              l = lam(spec, xi, 2);
            } catch (const Error& e) {
              if (e.code() == ErrorCode::kOutsideDomain) {
                throw Error(ErrorCode::kTiltOutsideDomain, "tilt parameter outside the domain");
              }
              throw;
            }
            if (!l.g.allFinite() || !l.h.allFinite()) {
              throw Error(ErrorCode::kTiltOutsideDomain, "tilt parameter outside the domain");
            }
            return MeasureSpec::make_tilt(spec, xi, l.g, l.h, l.v);
          },
      },
      spec.node().v);
}

// ---------------------------------------------------------------- level sets

bodies::BodyHandle lambda_p_body(std::shared_ptr<const LambdaEvaluator> lambda, double p,
                                 LevelSetConfig cfg) {
  if (!(p > 0.0)) throw Error(ErrorCode::kInvalidArgument, "p must be positive");
  return std::make_shared<LambdaLevelBody>(std::move(lambda), p, cfg);
}

bodies::BodyHandle lambda_p_body(const MeasureSpec& spec, double p, Mode mode,
                                 const McConfig& mc) {
  return lambda_p_body(std::make_shared<const LambdaEvaluator>(spec, mode, mc), p);
}

StarSample sample_star_body(const bodies::Body& body, double s, std::size_t count,
                            std::uint64_t seed) {
  const int n = body.dim();
  const Mat dirs = bodies::uniform_directions(n, count, seed);
  StarSample out;
  out.points.resize(n, static_cast<Eigen::Index>(count));
  out.weights.resize(static_cast<Eigen::Index>(count));
  out.radii.resize(static_cast<Eigen::Index>(count));
  const std::size_t chunks = (count + kChunkSize - 1) / kChunkSize;
  for (std::size_t c = 0; c < chunks; ++c) {
    Rng rng(derive_seed(seed ^ 0x7ad1a1ULL, c));
    for (std::size_t i = c * kChunkSize; i < std::min(count, (c + 1) * kChunkSize); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const Vec u = dirs.col(k);
      const double r = body.radial(u).value;
      out.radii[k] = r;
      out.weights[k] = std::pow(r, n);
      out.points.col(k) = s * r * std::pow(rng.uniform(), 1.0 / n) * u;
    }
  }
  out.weights /= out.weights.sum();
  return out;
}

Mat resample(const StarSample& sample, std::size_t count, std::uint64_t seed) {
  std::vector<double> cum(static_cast<std::size_t>(sample.weights.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sample.weights.size(); ++i) {
    acc += sample.weights[i];
    cum[static_cast<std::size_t>(i)] = acc;
  }
  Mat out(sample.points.rows(), static_cast<Eigen::Index>(count));
  Rng rng(derive_seed(seed, 0x4e5a));
  for (std::size_t j = 0; j < count; ++j) {
    auto it = std::upper_bound(cum.begin(), cum.end(), rng.uniform() * acc);
    if (it == cum.end()) --it;
    out.col(static_cast<Eigen::Index>(j)) = sample.points.col(it - cum.begin());
  }
  return out;
}

Estimate psi_p_estimate(std::shared_ptr<const LambdaEvaluator> lambda, double p,
                        const PsiConfig& cfg) {
  const int n = lambda->dim();
  const auto body = lambda_p_body(lambda, p);
  const StarSample pts = sample_star_body(*body, 0.5, cfg.points, cfg.seed);
  std::vector<double> vals(cfg.points);
  for (std::size_t i = 0; i < cfg.points; ++i) {
    const Mat h = lambda->derivatives(pts.points.col(static_cast<Eigen::Index>(i))).hessian;
    vals[i] = numerics::clipped_det(h, 1e-12);
  }
  Estimate m = batch_mean(vals, std::span<const double>(pts.weights.data(), cfg.points),
                          cfg.batches, cfg.seed);
  const double v = std::pow(m.value, 1.0 / n);
  return propagate(m, v, v / (n * m.value));
}

Estimate psi_p_estimate(const MeasureSpec& spec, double p, std::size_t n_points,
                        std::uint64_t seed) {
  PsiConfig cfg;
  cfg.points = n_points;
  cfg.seed = seed;
  return psi_p_estimate(std::make_shared<const LambdaEvaluator>(spec), p, cfg);
}

}  // namespace clab::loglaplace
