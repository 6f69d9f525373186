#include "clab/bodies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "clab/error.hpp"
#include "clab/hull.hpp"
#include "clab/rng.hpp"

namespace clab::bodies {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Estimate reciprocal(const Estimate& e) {
  return propagate(e, 1.0 / e.value, 1.0 / (e.value * e.value));
}

Estimate scaled(Estimate e, double s) {
  e.value *= s;
  e.std_error *= std::fabs(s);
  return e;
}

class BallBody final : public Body {
 public:
  BallBody(int dim, double r) : dim_(dim), r_(r) {}
  int dim() const override { return dim_; }
  bool symmetric() const override { return true; }
  bool has_support() const override { return true; }
  std::string describe() const override {
    std::ostringstream os;
    os << "ball" << dim_ << "(r=" << r_ << ")";
    return os.str();
  }
  Estimate support(const Vec& u) const override { return Estimate::exact(r_ * u.norm()); }
  Estimate radial(const Vec& u) const override { return Estimate::exact(r_ / u.norm()); }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    const double n = u.norm();
    return SupportGradient{Estimate::exact(r_ * n), r_ / n * u};
  }
  std::optional<double> exact_volume_radius() const override { return r_; }
  double radius() const { return r_; }

 private:
  int dim_;
  double r_;
};

class BoxBody final : public Body {
 public:
  explicit BoxBody(Vec h) : h_(std::move(h)) {}
  int dim() const override { return static_cast<int>(h_.size()); }
  bool symmetric() const override { return true; }
  bool has_support() const override { return true; }
  std::string describe() const override {
    std::ostringstream os;
    os << "box" << h_.size() << "(hw=" << h_.maxCoeff() << ")";
    return os.str();
  }
  Estimate support(const Vec& u) const override {
    return Estimate::exact(h_.dot(u.cwiseAbs()));
  }
  Estimate radial(const Vec& u) const override {
    double r = kInf;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      if (u[i] != 0.0) r = std::min(r, h_[i] / std::fabs(u[i]));
    }
    return Estimate::exact(r);
  }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    Vec g(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) g[i] = u[i] >= 0.0 ? h_[i] : -h_[i];
    return SupportGradient{support(u), g};
  }
  std::optional<double> exact_volume_radius() const override {
    const int n = dim();
    double logv = 0.0;
    for (Eigen::Index i = 0; i < h_.size(); ++i) logv += std::log(2.0 * h_[i]);
    return std::exp((logv - numerics::log_unit_ball_volume(n)) / n);
  }
  const Vec& halfwidths() const { return h_; }

 private:
  Vec h_;
};

class PolytopeBody final : public Body {
 public:
  explicit PolytopeBody(const Mat& vertices) : v_(vertices) {
    try {
      hull_ = std::make_shared<const ConvexHull>(vertices);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateHull) throw;
    }
    symmetric_ = true;
    for (Eigen::Index j = 0; j < v_.cols() && symmetric_; ++j) {
      bool found = false;
      for (Eigen::Index k = 0; k < v_.cols() && !found; ++k) {
        found = (v_.col(j) + v_.col(k)).cwiseAbs().maxCoeff() <=
                1e-12 * (1.0 + v_.col(j).cwiseAbs().maxCoeff());
      }
      symmetric_ = found;
    }
  }
  int dim() const override { return static_cast<int>(v_.rows()); }
  bool symmetric() const override { return symmetric_; }
  bool has_support() const override { return true; }
  bool has_radial() const override { return hull_ && hull_->contains_origin_interior(); }
  std::string describe() const override {
    std::ostringstream os;
    os << "polytope" << v_.rows() << "(v=" << v_.cols() << ")";
    return os.str();
  }
  Estimate support(const Vec& u) const override {
    return Estimate::exact((v_.transpose() * u).maxCoeff());
  }
  Estimate radial(const Vec& u) const override {
    if (!has_radial()) {
      throw Error(ErrorCode::kNoRadialOracle, "polytope does not contain the origin in its interior");
    }
    return Estimate::exact(hull_->radial(u));
  }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    Eigen::Index best = 0;
    const double h = (v_.transpose() * u).maxCoeff(&best);
    return SupportGradient{Estimate::exact(h), v_.col(best)};
  }
  std::optional<double> exact_volume_radius() const override {
    if (!hull_) return 0.0;
    const int n = dim();
    return std::exp((std::log(hull_->volume()) - numerics::log_unit_ball_volume(n)) / n);
  }
  const std::shared_ptr<const ConvexHull>& hull() const { return hull_; }
  const Mat& vertices() const { return v_; }

 private:
  Mat v_;
  std::shared_ptr<const ConvexHull> hull_;
  bool symmetric_ = false;
};

class ScaledBody final : public Body {
 public:
  ScaledBody(BodyHandle base, double s) : base_(std::move(base)), s_(s) {}
  int dim() const override { return base_->dim(); }
  bool symmetric() const override { return base_->symmetric(); }
  bool has_support() const override { return base_->has_support(); }
  bool has_radial() const override { return base_->has_radial(); }
  std::string describe() const override {
    std::ostringstream os;
    os << s_ << "*" << base_->describe();
    return os.str();
  }
  Estimate support(const Vec& u) const override { return scaled(base_->support(u), s_); }
  Estimate radial(const Vec& u) const override { return scaled(base_->radial(u), s_); }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    auto g = base_->support_gradient(u);
    if (!g) return std::nullopt;
    return SupportGradient{scaled(g->value, s_), s_ * g->gradient};
  }
  std::optional<double> exact_volume_radius() const override {
    auto v = base_->exact_volume_radius();
    if (!v) return std::nullopt;
    return *v * s_;
  }

 private:
  BodyHandle base_;
  double s_;
};

class PolarBody final : public Body {
 public:
  explicit PolarBody(BodyHandle base) : base_(std::move(base)) {}
  int dim() const override { return base_->dim(); }
  bool symmetric() const override { return base_->symmetric(); }
  bool has_support() const override { return base_->has_radial(); }
  bool has_radial() const override { return base_->has_support(); }
  std::string describe() const override { return "polar(" + base_->describe() + ")"; }
  Estimate support(const Vec& u) const override {
    if (!base_->has_radial()) {
      throw Error(ErrorCode::kNoSupportOracle, "polar needs a radial oracle of the body");
    }
    return reciprocal(base_->radial(u));
  }
  Estimate radial(const Vec& u) const override {
    if (!base_->has_support()) {
      throw Error(ErrorCode::kNoRadialOracle, "polar needs a support oracle of the body");
    }
    return reciprocal(base_->support(u));
  }
  const BodyHandle& base() const { return base_; }

 private:
  BodyHandle base_;
};

class ProjectedBody final : public Body {
 public:
  ProjectedBody(BodyHandle base, Subspace e) : base_(std::move(base)), e_(std::move(e)) {}
  int dim() const override { return e_.dim(); }
  bool symmetric() const override { return base_->symmetric(); }
  bool has_support() const override { return true; }
  std::string describe() const override {
    std::ostringstream os;
    os << "proj" << e_.dim() << "(" << base_->describe() << ")";
    return os.str();
  }
  Estimate support(const Vec& u) const override {
    return base_->support(e_.basis.transpose() * u);
  }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    auto g = base_->support_gradient(e_.basis.transpose() * u);
    if (!g) return std::nullopt;
    return SupportGradient{g->value, e_.basis * g->gradient};
  }

 private:
  BodyHandle base_;
  Subspace e_;
};

class ClosureBody final : public Body {
 public:
  explicit ClosureBody(SupportClosure c) : c_(std::move(c)) {}
  int dim() const override { return c_.dim; }
  bool symmetric() const override { return c_.symmetric; }
  bool has_support() const override { return true; }
  std::string describe() const override { return c_.name; }
  Estimate support(const Vec& u) const override { return c_.support(u); }
  std::optional<SupportGradient> support_gradient(const Vec& u) const override {
    if (!c_.gradient) return std::nullopt;
    return c_.gradient(u);
  }

 private:
  SupportClosure c_;
};

void require_unit(const Vec& theta) {
  if (std::fabs(theta.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "direction must be a unit vector");
  }
}

// Value and gradient of h; central differences when the body has no
// analytic gradient.
Body::SupportGradient value_and_gradient(const Body& body, const Vec& u) {
  if (auto g = body.support_gradient(u)) return *g;
  Body::SupportGradient out{body.support(u), Vec(u.size())};
  const double step = 1e-6 * std::max(1.0, u.norm());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Vec a = u;
    Vec b = u;
    a[i] += step;
    b[i] -= step;
    out.gradient[i] = (body.support(a).value - body.support(b).value) / (2.0 * step);
  }
  return out;
}

// Orthonormal complement of a unit vector, as n x (n-1) columns.
Mat complement(const Vec& unit) {
  const Eigen::Index n = unit.size();
  const Mat column = unit;
  Eigen::HouseholderQR<Mat> qr(column);
  const Mat q = qr.householderQ() * Mat::Identity(n, n);
  return q.rightCols(n - 1);
}

struct SphereStats {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
  int batches = 0;
  bool flagged = false;
};

// Mean of f over the sphere, using the net rule for the dimension. `f`
// returns the integrand and the standard error of that value.
SphereStats sphere_mean(int n, const SphereConfig& cfg,
                        const std::function<std::pair<double, double>(const Vec&)>& f) {
  SphereStats s;
  if (n == 1) {
    Vec p(1), m(1);
    p << 1.0;
    m << -1.0;
    const auto a = f(p);
    const auto b = f(m);
    s.mean = 0.5 * (a.first + b.first);
    s.std_error = 0.5 * (a.second + b.second);
    s.count = 2;
    return s;
  }
  std::size_t count = cfg.directions;
  if (count == 0) count = n == 2 ? 1024 : 4096;
  const DirectionNet net = make_net(n, count, cfg.seed);
  std::vector<double> vals(net.count);
  double support_err = 0.0;
  for (std::size_t i = 0; i < net.count; ++i) {
    const auto r = f(net.directions.col(static_cast<Eigen::Index>(i)));
    vals[i] = r.first;
    support_err += r.second;
  }
  support_err /= static_cast<double>(net.count);
  s.count = net.count;
  if (n == 2) {
    double all = 0.0, half = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      all += vals[i];
      if (i % 2 == 0) half += vals[i];
    }
    all /= static_cast<double>(vals.size());
    half /= static_cast<double>((vals.size() + 1) / 2);
    s.mean = all;
    s.std_error = std::hypot(std::fabs(all - half), support_err);
    s.batches = 0;
    return s;
  }
  std::vector<double> pairs(vals.size() / 2);
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = 0.5 * (vals[2 * i] + vals[2 * i + 1]);
  const Estimate e = batch_mean(pairs, {}, cfg.batches, cfg.seed);
  s.mean = e.value;
  s.std_error = std::hypot(e.std_error, support_err);
  s.batches = e.n_batches;
  return s;
}

}  // namespace

// ---------------------------------------------------------------- Body

Estimate Body::support(const Vec&) const {
  throw Error(ErrorCode::kNoSupportOracle, describe() + " has no support oracle");
}

Estimate Body::radial(const Vec& u) const {
  if (!has_support()) {
    throw Error(ErrorCode::kNoRadialOracle, describe() + " has no radial oracle");
  }
  return radial_from_support(*this, u);
}

std::optional<Body::SupportGradient> Body::support_gradient(const Vec&) const {
  return std::nullopt;
}

// ---------------------------------------------------------------- factories

BodyHandle make_ball(int dim, double radius) {
  if (dim < 1 || !(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bad ball");
  return std::make_shared<BallBody>(dim, radius);
}

BodyHandle make_box(const Vec& halfwidths) {
  if (halfwidths.size() < 1 || halfwidths.minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "bad box");
  }
  return std::make_shared<BoxBody>(halfwidths);
}

BodyHandle make_cube(int dim, double halfwidth) {
  return make_box(Vec::Constant(dim, halfwidth));
}

BodyHandle make_polytope(const Mat& vertices) {
  if (vertices.cols() < 1 || vertices.rows() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "empty vertex list");
  }
  return std::make_shared<PolytopeBody>(vertices);
}

BodyHandle make_symmetric_hull(const Mat& points) {
  Mat both(points.rows(), 2 * points.cols());
  both << points, -points;
  return make_polytope(both);
}

BodyHandle make_support_body(SupportClosure closure) {
  return std::make_shared<ClosureBody>(std::move(closure));
}

BodyHandle scale(const BodyHandle& body, double factor) {
  if (!(factor > 0.0)) throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  if (const auto* b = dynamic_cast<const BallBody*>(body.get())) {
    return make_ball(b->dim(), b->radius() * factor);
  }
  if (const auto* b = dynamic_cast<const BoxBody*>(body.get())) {
    return make_box(b->halfwidths() * factor);
  }
  return std::make_shared<ScaledBody>(body, factor);
}

// ---------------------------------------------------------------- nets

Mat uniform_directions(int dim, std::size_t count, std::uint64_t seed) {
  Mat out(dim, static_cast<Eigen::Index>(count));
  const std::size_t chunks = (count + kChunkSize - 1) / kChunkSize;
  for (std::size_t c = 0; c < chunks; ++c) {
    Rng rng(derive_seed(seed, c));
    for (std::size_t i = c * kChunkSize; i < std::min(count, (c + 1) * kChunkSize); ++i) {
      Vec g(dim);
      do {
        for (int k = 0; k < dim; ++k) g[k] = rng.normal();
      } while (g.squaredNorm() == 0.0);
      out.col(static_cast<Eigen::Index>(i)) = g.normalized();
    }
  }
  return out;
}

DirectionNet make_net(int dim, std::size_t count, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "dimension must be >= 1");
  DirectionNet net;
  net.dim = dim;
  net.seed = seed;
  if (dim == 1) {
    net.rule = "pair";
    net.count = 2;
    net.directions.resize(1, 2);
    net.directions << 1.0, -1.0;
    return net;
  }
  if (dim == 2) {
    net.rule = "grid";
    net.count = std::max<std::size_t>(count, 4);
    net.directions.resize(2, static_cast<Eigen::Index>(net.count));
    for (std::size_t k = 0; k < net.count; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(net.count);
      net.directions(0, static_cast<Eigen::Index>(k)) = std::cos(a);
      net.directions(1, static_cast<Eigen::Index>(k)) = std::sin(a);
    }
    return net;
  }
  net.rule = "antithetic";
  const std::size_t half = std::max<std::size_t>(1, (count + 1) / 2);
  net.count = 2 * half;
  const Mat base = uniform_directions(dim, half, seed);
  net.directions.resize(dim, static_cast<Eigen::Index>(net.count));
  for (std::size_t i = 0; i < half; ++i) {
    net.directions.col(static_cast<Eigen::Index>(2 * i)) = base.col(static_cast<Eigen::Index>(i));
    net.directions.col(static_cast<Eigen::Index>(2 * i + 1)) =
        -base.col(static_cast<Eigen::Index>(i));
  }
  return net;
}

// ---------------------------------------------------------------- oracles

Estimate support(const Body& body, const Vec& theta) {
  require_unit(theta);
  return body.support(theta);
}

Estimate radial(const Body& body, const Vec& theta) {
  require_unit(theta);
  return body.radial(theta);
}

Estimate radial_from_support(const Body& body, const Vec& theta) {
  const int n = body.dim();
  const double norm = theta.norm();
  const Vec th = theta / norm;
  if (n == 1) return scaled(body.support(th), 1.0 / norm);
  const Mat q = complement(th);
  Vec w = Vec::Zero(n - 1);
  auto sg = value_and_gradient(body, th);
  Vec g = q.transpose() * sg.gradient;
  Mat hinv = Mat::Identity(n - 1, n - 1);
  bool scaled_once = false;
  for (int it = 0; it < 300; ++it) {
    const double f = sg.value.value;
    if (g.norm() <= 1e-13 * std::max(f, 1e-300)) break;
    Vec d = -hinv * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double alpha = 1.0;
    bool accepted = false;
    Body::SupportGradient next;
    for (int ls = 0; ls < 60; ++ls) {
      next = value_and_gradient(body, th + q * (w + alpha * d));
      if (next.value.value <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const Vec s = alpha * d;
    const Vec gn = q.transpose() * next.gradient;
    const Vec y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      if (!scaled_once) {
        hinv = Mat::Identity(n - 1, n - 1) * (sy / y.squaredNorm());
        scaled_once = true;
      }
      const double rho = 1.0 / sy;
      const Mat left = Mat::Identity(n - 1, n - 1) - rho * s * y.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    }
    const double improvement = f - next.value.value;
    w += s;
    g = gn;
    sg = next;
    if (improvement <= 1e-16 * f) break;
  }
  return scaled(sg.value, 1.0 / norm);
}

BodyHandle polar(const BodyHandle& body) {
  if (const auto* p = dynamic_cast<const PolarBody*>(body.get())) return p->base();
  if (const auto* b = dynamic_cast<const BallBody*>(body.get())) {
    return make_ball(b->dim(), 1.0 / b->radius());
  }
  const int n = body->dim();
  if (const auto* b = dynamic_cast<const BoxBody*>(body.get())) {
    Mat v = Mat::Zero(n, 2 * n);
    for (int i = 0; i < n; ++i) {
      v(i, 2 * i) = 1.0 / b->halfwidths()[i];
      v(i, 2 * i + 1) = -1.0 / b->halfwidths()[i];
    }
    return make_polytope(v);
  }
  if (const auto* p = dynamic_cast<const PolytopeBody*>(body.get())) {
    if (!p->has_radial()) {
      throw Error(ErrorCode::kOriginNotInterior, "origin is not interior to the polytope");
    }
    const auto& facets = p->hull()->facets();
    Mat v(n, static_cast<Eigen::Index>(facets.size()));
    for (std::size_t f = 0; f < facets.size(); ++f) {
      v.col(static_cast<Eigen::Index>(f)) = facets[f].normal / facets[f].offset;
    }
    return make_polytope(v);
  }
  for (int i = 0; i < n; ++i) {
    for (double sgn : {1.0, -1.0}) {
      Vec e = Vec::Zero(n);
      e[i] = sgn;
      const double v = body->has_support() ? body->support(e).value : body->radial(e).value;
      if (!(v > 0.0)) {
        throw Error(ErrorCode::kOriginNotInterior, "origin is not interior to " + body->describe());
      }
    }
  }
  return std::make_shared<PolarBody>(body);
}

BodyHandle project_body(const BodyHandle& body, const Subspace& e) {
  if (e.ambient != body->dim()) {
    throw Error(ErrorCode::kInvalidArgument, "subspace ambient dimension mismatch");
  }
  if (numerics::orthonormality_defect(e.basis) > 1e-12) {
    throw Error(ErrorCode::kNonOrthonormalBasis, "subspace basis is not orthonormal");
  }
  if (!body->has_support()) {
    throw Error(ErrorCode::kNoSupportOracle, "projection needs a support oracle");
  }
  if (const auto* b = dynamic_cast<const BallBody*>(body.get())) {
    return make_ball(e.dim(), b->radius());
  }
  return std::make_shared<ProjectedBody>(body, e);
}

// ---------------------------------------------------------------- diameter

DiameterResult diameter_search(const Body& body, const DiameterConfig& cfg) {
  if (!body.has_support()) {
    throw Error(ErrorCode::kNoSupportOracle, "diameter needs a support oracle");
  }
  const int n = body.dim();
  const bool sym = body.symmetric();
  auto width = [&](const Vec& th) -> Estimate {
    if (sym) return scaled(body.support(th), 2.0);
    Estimate a = body.support(th);
    const Estimate b = body.support(-th);
    a.value += b.value;
    a.std_error += b.std_error;
    return a;
  };
  auto width_grad = [&](const Vec& th) -> std::pair<Estimate, Vec> {
    auto a = value_and_gradient(body, th);
    if (sym) return {scaled(a.value, 2.0), 2.0 * a.gradient};
    auto b = value_and_gradient(body, -th);
    Estimate e = a.value;
    e.value += b.value.value;
    e.std_error += b.value.std_error;
    return {e, a.gradient - b.gradient};
  };
  DiameterResult res;
  if (n == 1) {
    Vec e(1);
    e << 1.0;
    res.value = width(e);
    res.argmax = e;
    res.net_value = res.value.value;
    res.upper_bound = res.value.value;
    res.converged = true;
    return res;
  }
  std::size_t count = cfg.net_size;
  if (count == 0) count = n == 2 ? 720 : 2048;
  const DirectionNet net = make_net(n, count, cfg.seed);
  std::vector<double> w(net.count);
  for (std::size_t i = 0; i < net.count; ++i) {
    w[i] = width(net.directions.col(static_cast<Eigen::Index>(i))).value;
  }
  std::vector<std::size_t> order(net.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  res.net_value = w[order.front()];

  // Widths are even in theta, so antipodal starts are redundant.
  std::vector<Vec> starts;
  for (const Vec& v : cfg.warm_starts) {
    if (v.size() == n && v.norm() > 0.0) starts.push_back(v.normalized());
  }
  for (std::size_t idx : order) {
    if (static_cast<int>(starts.size()) >= cfg.starts + static_cast<int>(cfg.warm_starts.size())) break;
    const Vec th = net.directions.col(static_cast<Eigen::Index>(idx));
    bool dup = false;
    for (const Vec& s : starts) dup = dup || std::fabs(s.dot(th)) > 1.0 - 1e-12;
    if (!dup) starts.push_back(th);
  }

  double best = -kInf;
  for (const Vec& start : starts) {
    Vec th = start;
    auto [val, grad] = width_grad(th);
    double eta = 0.25;
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      const Vec pg = grad - grad.dot(th) * th;
      const double pn = pg.norm();
      if (pn <= 1e-12 * std::max(val.value, 1e-300)) {
        converged = true;
        break;
      }
      const Vec cand = (th + eta * pg / pn).normalized();
      auto [cv, cg] = width_grad(cand);
      if (cv.value > val.value) {
        th = cand;
        val = cv;
        grad = cg;
        eta = std::min(1.0, 1.5 * eta);
      } else {
        eta *= 0.5;
        if (eta < 1e-7) {
          converged = true;
          break;
        }
      }
    }
    if (val.value > best) {
      best = val.value;
      res.value = val;
      res.argmax = th;
      res.converged = converged;
    }
  }
  res.value.flagged = res.value.flagged || !res.converged;

  const Mat probes = uniform_directions(n, 4096, derive_seed(cfg.seed, 0x9e7));
  const Mat dots = (probes.transpose() * net.directions).cwiseAbs();
  double worst = 1.0;
  for (Eigen::Index i = 0; i < dots.rows(); ++i) worst = std::min(worst, dots.row(i).maxCoeff());
  res.net_resolution = std::sqrt(std::max(0.0, 2.0 - 2.0 * worst));
  res.upper_bound = res.net_resolution < 1.0
                        ? std::max(res.value.value, res.net_value / (1.0 - res.net_resolution))
                        : kInf;
  return res;
}

Estimate diameter(const Body& body, const DiameterConfig& cfg) {
  return diameter_search(body, cfg).value;
}

// ---------------------------------------------------------------- widths

Estimate mean_width(const Body& body, double q, const SphereConfig& cfg) {
  if (!(q >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "q must be >= 1");
  const SphereStats s = sphere_mean(body.dim(), cfg, [&](const Vec& th) {
    const Estimate h = body.support(th);
    const double hq = std::pow(h.value, q);
    return std::pair{hq, q * hq / h.value * h.std_error};
  });
  Estimate m;
  m.value = s.mean;
  m.std_error = s.std_error;
  m.n_samples = static_cast<std::int64_t>(s.count);
  m.n_batches = s.batches;
  m.seed = cfg.seed;
  const double v = std::pow(s.mean, 1.0 / q);
  return propagate(m, v, v / (q * s.mean));
}

Estimate vrad_radial(const Body& body, const SphereConfig& cfg) {
  if (!body.has_radial()) {
    throw Error(ErrorCode::kNoRadialOracle, body.describe() + " has no radial oracle");
  }
  const int n = body.dim();
  const SphereStats s = sphere_mean(n, cfg, [&](const Vec& th) {
    const Estimate r = body.radial(th);
    const double rn = std::pow(r.value, n);
    return std::pair{rn, n * rn / r.value * r.std_error};
  });
  Estimate m;
  m.value = s.mean;
  m.std_error = s.std_error;
  m.n_samples = static_cast<std::int64_t>(s.count);
  m.n_batches = s.batches;
  m.seed = cfg.seed;
  const double v = std::pow(s.mean, 1.0 / n);
  return propagate(m, v, v / (n * s.mean));
}

double vrad_hull(const Mat& points) {
  const ConvexHull hull(points);
  const int n = hull.dim();
  return std::exp((std::log(hull.volume()) - numerics::log_unit_ball_volume(n)) / n);
}

Vec boundary_point(const Body& body, const Vec& theta) {
  require_unit(theta);
  if (!body.has_support()) {
    throw Error(ErrorCode::kNoSupportOracle, body.describe() + " has no support oracle");
  }
  auto g = body.support_gradient(theta);
  if (!g) {
    throw Error(ErrorCode::kNonSmoothAtDirection,
                body.describe() + " has no support gradient");
  }
  return g->gradient;
}

Subspace sample_grassmann(int n, int k, std::uint64_t seed) {
  if (k < 1 || k > n) throw Error(ErrorCode::kInvalidArgument, "need 1 <= k <= n");
  Rng rng(derive_seed(seed, 0x6a55));
  Mat g(n, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  const Mat q = qr.householderQ() * Mat::Identity(n, k);
  Subspace e{n, q.transpose()};
  return e;
}

}  // namespace clab::bodies
