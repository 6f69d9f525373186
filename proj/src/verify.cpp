#include "clab/verify.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <set>
#include <sstream>

#include "clab/bodies.hpp"
#include "clab/centroid.hpp"
#include "clab/error.hpp"
#include "clab/loglaplace.hpp"
#include "clab/metrics.hpp"
#include "clab/numerics.hpp"
#include "clab/rng.hpp"

namespace clab::verify {

using json = nlohmann::json;
using measures::MeasureEvaluator;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double bound_from_json(const json& j, double fallback) {
  if (j.is_null()) return fallback;
  if (!j.is_number()) throw Error(ErrorCode::kConfig, "envelope bounds must be numbers or null");
  return j.get<double>();
}

json bound_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Rows ending in ":min" or ":max" share the envelope of their stem.
std::string envelope_key(const std::string& row) {
  for (const char* suffix : {":min", ":max"}) {
    const std::string s(suffix);
    if (row.size() > s.size() && row.compare(row.size() - s.size(), s.size(), s) == 0) {
      return row.substr(0, row.size() - s.size());
    }
  }
  return row;
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double gamma_p(double p) { return std::pow(numerics::gaussian_abs_moment(p), 1.0 / p); }

std::size_t net_size(const CheckContext& ctx, int n) {
  if (ctx.net > 0) return ctx.net;
  if (n == 1) return 2;
  if (n == 2) return 180;
  if (n == 3) return 256;
  return 384;
}

std::uint64_t check_seed(const CheckContext& ctx, const std::string& label) {
  return derive_seed(ctx.seed, fnv1a(label));
}

McConfig measure_mc(const CheckContext& ctx, const TestMeasure& mu) {
  McConfig mc = ctx.mc;
  mc.seed = check_seed(ctx, "measure:" + mu.family + ":" + std::to_string(mu.spec.dim()));
  return mc;
}

std::shared_ptr<const MeasureEvaluator> evaluator(const TestMeasure& mu, const CheckContext& ctx) {
  return std::make_shared<const MeasureEvaluator>(mu.spec, measure_mc(ctx, mu));
}

CheckReport start_row(const std::string& check, const TestMeasure& mu, const CheckContext& ctx) {
  CheckReport r;
  r.check = check;
  r.measure = mu.family;
  r.descriptor = mu.spec.describe();
  r.dim = mu.spec.dim();
  r.seed = measure_mc(ctx, mu).seed;
  r.samples = ctx.mc.samples;
  return r;
}

void finish(CheckReport& r, const CheckContext& ctx, Clock::time_point t0) {
  if (ctx.envelopes == nullptr) throw Error(ErrorCode::kConfig, "no envelope set");
  r.envelope = ctx.envelopes->get(r.check, r.measure);
  const double s = ctx.slack * r.constant_stderr;
  r.pass = std::isfinite(r.constant) && r.constant >= r.envelope.lo - s &&
           r.constant <= r.envelope.hi + s;
  r.runtime_ms = ms_since(t0);
}

void set_constant(CheckReport& r, double c, double se) {
  r.constant = c;
  r.constant_stderr = se;
}

double det_root(const Mat& cov) {
  const int n = static_cast<int>(cov.rows());
  return std::pow(numerics::clipped_det(cov), 1.0 / (2.0 * n));
}

// Points uniform in s * body (a star body with a radial oracle).
std::vector<Vec> star_points(const bodies::Body& body, double s, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  if (count <= 0) return out;
  const auto cloud = loglaplace::sample_star_body(body, s, 8 * static_cast<std::size_t>(count), seed);
  const Mat pts = loglaplace::resample(cloud, static_cast<std::size_t>(count), derive_seed(seed, 1));
  for (Eigen::Index i = 0; i < pts.cols(); ++i) out.push_back(pts.col(i));
  return out;
}

std::vector<double> radials(const bodies::Body& body, const Mat& dirs) {
  std::vector<double> r(static_cast<std::size_t>(dirs.cols()));
  for (Eigen::Index i = 0; i < dirs.cols(); ++i) {
    r[static_cast<std::size_t>(i)] = body.radial(dirs.col(i)).value;
  }
  return r;
}

Estimate vrad_of(std::shared_ptr<const MeasureEvaluator> eval, double p, const CheckContext& ctx) {
  centroid::VradConfig cfg;
  cfg.seed = check_seed(ctx, "vrad");
  return centroid::zp_vrad(std::move(eval), p, cfg);
}

void require_volume_dim(int n) {
  if (n > 5) throw Error(ErrorCode::kDimTooLarge, "volume checks are limited to dim <= 5");
}

std::string p_tag(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

// ---------------------------------------------------------------- envelopes

EnvelopeSet EnvelopeSet::parse(const std::string& text, bool require_hash) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("envelope file is not valid JSON: ") + e.what());
  }
  if (!doc.contains("checks") || !doc["checks"].is_object()) {
    throw Error(ErrorCode::kConfig, "envelope file has no checks object");
  }
  const auto prov = doc.find("provenance");
  const bool has_hash = prov != doc.end() && prov->contains("hash") && (*prov)["hash"].is_string();
  if (require_hash && !has_hash) {
    throw Error(ErrorCode::kConfig, "envelope file has no provenance hash; refusing to run");
  }
  EnvelopeSet set;
  set.text_ = text;
  set.hash_ = has_hash ? (*prov)["hash"].get<std::string>() : "";
  const std::string expect = "fnv1a64:" + fnv1a_hex(doc["checks"].dump());
  if (require_hash && set.hash_ != expect) {
    throw Error(ErrorCode::kConfig, "envelope provenance hash mismatch (have " + set.hash_ +
                                        ", checks hash to " + expect + ")");
  }
  for (const auto& [row, entry] : doc["checks"].items()) {
    if (!entry.contains("bounds") || !entry["bounds"].is_object()) {
      throw Error(ErrorCode::kConfig, "envelope entry " + row + " has no bounds");
    }
    for (const auto& [family, b] : entry["bounds"].items()) {
      if (!b.is_array() || b.size() != 2) {
        throw Error(ErrorCode::kConfig, "bounds of " + row + "/" + family + " must be [lo, hi]");
      }
      set.table_[row][family] = Envelope{bound_from_json(b[0], -kInf), bound_from_json(b[1], kInf)};
    }
  }
  return set;
}

EnvelopeSet EnvelopeSet::load(const std::string& path, bool require_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read envelope file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), require_hash);
}

Envelope EnvelopeSet::get(const std::string& row, const std::string& family) const {
  const auto it = table_.find(envelope_key(row));
  if (it == table_.end()) throw Error(ErrorCode::kConfig, "no envelope for " + row);
  if (auto f = it->second.find(family); f != it->second.end()) return f->second;
  if (auto f = it->second.find("default"); f != it->second.end()) return f->second;
  throw Error(ErrorCode::kConfig, "no envelope for " + row + "/" + family);
}

std::string calibrate_envelopes(const EnvelopeSet& base, const Rows& rows,
                                const std::map<std::string, std::string>& provenance) {
  json doc = json::parse(base.text());
  std::map<std::string, std::map<std::string, std::pair<double, double>>> seen;
  for (const auto& r : rows) {
    if (!std::isfinite(r.constant)) continue;
    auto& range = seen[envelope_key(r.check)]
                      .try_emplace(r.measure, std::make_pair(kInf, -kInf))
                      .first->second;
    range.first = std::min(range.first, r.constant);
    range.second = std::max(range.second, r.constant);
  }
  for (auto& [row, entry] : doc["checks"].items()) {
    if (entry.value("kind", "fixed") != "calibrated") continue;
    const auto it = seen.find(row);
    if (it == seen.end()) continue;
    const double margin = entry.value("margin", 1.25);
    const double clip_lo = entry.contains("clip") ? bound_from_json(entry["clip"][0], -kInf) : -kInf;
    const double clip_hi = entry.contains("clip") ? bound_from_json(entry["clip"][1], kInf) : kInf;
    for (const auto& [family, range] : it->second) {
      const double lo = std::max(clip_lo, range.first / margin);
      const double hi = std::min(clip_hi, range.second * margin);
      entry["bounds"][family] = json::array({bound_to_json(lo), bound_to_json(hi)});
      entry["observed"][family] = json::array({range.first, range.second});
    }
  }
  json prov = json::object();
  for (const auto& [k, v] : provenance) prov[k] = v;
  prov["hash"] = "fnv1a64:" + fnv1a_hex(doc["checks"].dump());
  doc["provenance"] = prov;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------- suite

TestMeasure make_test_measure(const std::string& family, int dim) {
  if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
  if (family == "gaussian") return {family, MeasureSpec::gaussian(dim), false};
  if (family == "cube") return {family, MeasureSpec::uniform_cube(dim, std::sqrt(3.0)), true};
  if (family == "ball") {
    return {family, MeasureSpec::uniform_ball(dim, std::sqrt(dim + 2.0)), true};
  }
  if (family == "simplex") return {family, measures::whiten(MeasureSpec::uniform_simplex(dim)), true};
  throw Error(ErrorCode::kInvalidArgument, "unknown measure family " + family);
}

std::vector<TestMeasure> standard_suite(int dim) {
  std::vector<TestMeasure> out;
  for (const char* f : {"gaussian", "cube", "ball", "simplex"}) out.push_back(make_test_measure(f, dim));
  return out;
}

// ---------------------------------------------------------------- checks

Rows check_lambda_zp_duality(const TestMeasure& mu, double p, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  const auto eval = evaluator(mu, ctx);
  const auto lam = std::make_shared<const loglaplace::LambdaEvaluator>(mu.spec);
  const auto lp = loglaplace::lambda_p_body(lam, p);
  const auto net = bodies::make_net(n, net_size(ctx, n), check_seed(ctx, "duality-net"));
  double lo = kInf, hi = -kInf, se_lo = 0.0, se_hi = 0.0;
  for (Eigen::Index i = 0; i < net.directions.cols(); ++i) {
    const Vec u = net.directions.col(i);
    const double r = lp->radial(u).value;
    const Estimate h = centroid::zp_support(*eval, u, p);
    const double ratio = r * h.value / p;
    const double se = r * h.std_error / p;
    if (ratio < lo) {
      lo = ratio;
      se_lo = se;
    }
    if (ratio > hi) {
      hi = ratio;
      se_hi = se;
    }
  }
  Rows rows;
  for (int side = 0; side < 2; ++side) {
    CheckReport r = start_row(side == 0 ? "lambda_zp_duality:min" : "lambda_zp_duality:max", mu, ctx);
    r.p = p;
    r.net = net.count;
    const double c = side == 0 ? lo : hi;
    const double se = side == 0 ? se_lo : se_hi;
    r.value = Estimate::exact(c);
    r.value.std_error = se;
    set_constant(r, c, se);
    r.details = {{"spread", hi / lo}, {"gaussian_curve", std::sqrt(2.0 * p) * gamma_p(p) / p}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  }
  return rows;
}

Rows check_zn_body(const TestMeasure& mu, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  const double p = n;
  const auto eval = evaluator(mu, ctx);
  Rows rows;
  if (measures::compactly_supported(mu.spec)) {
    const auto zinf = centroid::zp_body(mu.spec, centroid::kInfinity);
    const auto net = bodies::make_net(n, net_size(ctx, n), check_seed(ctx, "zn-net"));
    double lo = kInf, hi = -kInf, se_lo = 0.0, se_hi = 0.0;
    for (Eigen::Index i = 0; i < net.directions.cols(); ++i) {
      const Vec u = net.directions.col(i);
      const Estimate h = centroid::zp_support(*eval, u, p);
      const double hinf = zinf->support(u).value;
      const double ratio = h.value / hinf;
      if (ratio < lo) {
        lo = ratio;
        se_lo = h.std_error / hinf;
      }
      if (ratio > hi) {
        hi = ratio;
        se_hi = h.std_error / hinf;
      }
    }
    for (int side = 0; side < 2; ++side) {
      CheckReport r = start_row(side == 0 ? "zn_body:min" : "zn_body:max", mu, ctx);
      r.p = p;
      r.net = net.count;
      const double c = side == 0 ? lo : hi;
      const double se = side == 0 ? se_lo : se_hi;
      r.value = Estimate::exact(c);
      r.value.std_error = se;
      set_constant(r, c, se);
      finish(r, ctx, t0);
      rows.push_back(std::move(r));
    }
  }
  if (n <= 5) {
    CheckReport r = start_row("zn_body:vrad", mu, ctx);
    r.p = p;
    r.value = vrad_of(eval, p, ctx);
    const double scale = std::pow(measures::density_sup(mu.spec), 1.0 / n) / std::sqrt(p);
    set_constant(r, r.value.value * scale, r.value.std_error * scale);
    r.details = {{"density_sup_root", std::pow(measures::density_sup(mu.spec), 1.0 / n)}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  }
  return rows;
}

Rows check_lyz_and_paouris(const TestMeasure& mu, const std::vector<double>& p_grid,
                           const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  require_volume_dim(n);
  if (p_grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty p grid");
  const auto eval = evaluator(mu, ctx);
  const double vr2 = vrad_of(eval, 2.0, ctx).value;
  double vrk = 0.0;
  if (mu.uniform) {
    vrk = std::exp(-(std::log(measures::density_sup(mu.spec)) + numerics::log_unit_ball_volume(n)) / n);
  }
  double lyz = kInf, lyz_se = 0.0, lyz_p = 0.0;
  double pao = -kInf, pao_se = 0.0, pao_p = 0.0;
  Estimate vrn;
  bool have_n = false;
  for (double p : p_grid) {
    const Estimate v = vrad_of(eval, p, ctx);
    if (mu.uniform) {
      const double s = 1.0 / (std::sqrt(p / n) * vrk);
      if (v.value * s < lyz) {
        lyz = v.value * s;
        lyz_se = v.std_error * s;
        lyz_p = p;
      }
    }
    const double s = 1.0 / (std::sqrt(p) * vr2);
    if (v.value * s > pao) {
      pao = v.value * s;
      pao_se = v.std_error * s;
      pao_p = p;
    }
    if (p == n) {
      vrn = v;
      have_n = true;
    }
  }
  Rows rows;
  if (mu.uniform) {
    CheckReport r = start_row("lyz", mu, ctx);
    r.p = lyz_p;
    r.value = Estimate::exact(lyz);
    r.value.std_error = lyz_se;
    set_constant(r, lyz, lyz_se);
    r.details = {{"vrad_body", vrk}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
    if (have_n) {
      CheckReport z = start_row("lyz:zn", mu, ctx);
      z.p = n;
      z.value = vrn;
      set_constant(z, vrn.value / vrk, vrn.std_error / vrk);
      z.details = {{"vrad_body", vrk}};
      finish(z, ctx, t0);
      rows.push_back(std::move(z));
    }
  }
  CheckReport r = start_row("paouris", mu, ctx);
  r.p = pao_p;
  r.value = Estimate::exact(pao);
  r.value.std_error = pao_se;
  set_constant(r, pao, pao_se);
  r.details = {{"vrad_z2", vr2}};
  finish(r, ctx, t0);
  rows.push_back(std::move(r));
  return rows;
}

Rows check_tilt_stability(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  const auto lp = loglaplace::lambda_p_body(mu.spec, p);
  const auto net = bodies::make_net(n, net_size(ctx, n), check_seed(ctx, "tilt-net"));
  const std::vector<double> r0 = radials(*lp, net.directions);
  const auto xs = star_points(*lp, 0.5, n_tilts, check_seed(ctx, "tilts:" + mu.family + p_tag(p)));
  double a = 1.0, b = 1.0;
  for (const Vec& x : xs) {
    const auto lx = loglaplace::lambda_p_body(loglaplace::tilt(mu.spec, x), p);
    const std::vector<double> rx = radials(*lx, net.directions);
    for (std::size_t i = 0; i < rx.size(); ++i) {
      a = std::max(a, r0[i] / rx[i]);
      b = std::max(b, rx[i] / r0[i]);
    }
  }
  Rows rows;
  for (int side = 0; side < 2; ++side) {
    CheckReport r = start_row(side == 0 ? "tilt_stability:a" : "tilt_stability:b", mu, ctx);
    r.p = p;
    r.net = net.count;
    const double c = side == 0 ? a : b;
    r.value = Estimate::exact(c);
    set_constant(r, c, 0.0);
    r.details = {{"tilts", static_cast<double>(xs.size())}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  }
  return rows;
}

Rows check_vrad_formula(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  require_volume_dim(n);
  const auto eval = evaluator(mu, ctx);
  const auto lam = std::make_shared<const loglaplace::LambdaEvaluator>(mu.spec);
  const auto lp = loglaplace::lambda_p_body(lam, p);
  const Estimate lhs = vrad_of(eval, p, ctx);
  std::vector<Vec> xs{Vec::Zero(n)};
  for (Vec& x : star_points(*lp, 0.5, n_tilts, check_seed(ctx, "tilts:" + mu.family + p_tag(p)))) {
    xs.push_back(std::move(x));
  }
  double inf_det = kInf;
  for (const Vec& x : xs) inf_det = std::min(inf_det, det_root(lam->derivatives(x).hessian));
  const double gp = gamma_p(p);
  Rows rows;
  {
    CheckReport r = start_row("vrad_formula", mu, ctx);
    r.p = p;
    r.value = lhs;
    const double s = 1.0 / (gp * inf_det);
    set_constant(r, lhs.value * s, lhs.std_error * s);
    r.details = {{"inf_det_cov_root", inf_det}, {"gamma_p", gp}, {"tilts", double(xs.size())}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  }
  {
    loglaplace::PsiConfig pc;
    pc.points = 1024;
    pc.seed = check_seed(ctx, "psi:" + mu.family + p_tag(p));
    const Estimate psi = loglaplace::psi_p_estimate(lam, p, pc);
    CheckReport r = start_row("vrad_formula:psi", mu, ctx);
    r.p = p;
    r.value = lhs;
    const double root = std::sqrt(psi.value);
    const double c = lhs.value / (gp * root);
    const double se = c * (lhs.std_error / lhs.value + 0.5 * psi.std_error / psi.value);
    set_constant(r, c, se);
    r.details = {{"psi_p", psi.value}, {"psi_p_stderr", psi.std_error}};
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  }
  return rows;
}

Rows check_monotone_ratio(const TestMeasure& mu, const std::vector<std::pair<double, double>>& pairs,
                          const CheckContext& ctx) {
  const auto t0 = Clock::now();
  require_volume_dim(mu.spec.dim());
  if (pairs.empty()) throw Error(ErrorCode::kInvalidArgument, "no (p, q) pairs");
  const auto eval = evaluator(mu, ctx);
  std::map<double, Estimate> vr;
  auto get = [&](double p) -> const Estimate& {
    auto it = vr.find(p);
    if (it == vr.end()) it = vr.emplace(p, vrad_of(eval, p, ctx)).first;
    return it->second;
  };
  double best = kInf, best_se = 0.0, best_p = 0.0, best_q = 0.0;
  for (const auto& [p, q] : pairs) {
    if (!(p <= q)) throw Error(ErrorCode::kInvalidArgument, "pairs need p <= q");
    const Estimate& a = get(p);
    const Estimate& b = get(q);
    const double ratio = (a.value / std::sqrt(p)) / (b.value / std::sqrt(q));
    if (ratio < best) {
      best = ratio;
      best_se = ratio * (a.std_error / a.value + b.std_error / b.value);
      best_p = p;
      best_q = q;
    }
  }
  CheckReport r = start_row("monotone_ratio", mu, ctx);
  r.p = best_p;
  r.q = best_q;
  r.value = Estimate::exact(best);
  r.value.std_error = best_se;
  set_constant(r, best, best_se);
  finish(r, ctx, t0);
  return {r};
}

namespace {

// V.Rad. of Proj_E Z_k(nu), through the support of Z_k(nu) at E^T u.
Estimate projected_vrad(std::shared_ptr<const MeasureEvaluator> nu, int k, const Subspace& e,
                        std::uint64_t seed) {
  const auto body = bodies::project_body(centroid::zp_body(std::move(nu), k), e);
  return centroid::vrad_sandwich(*body, 0, seed).value;
}

std::vector<Subspace> flag_subspaces(int n, int k, const Mat& cov, std::uint64_t seed) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  std::vector<Subspace> out;
  // Flags spanned by the smallest and by the largest eigenvectors.
  out.push_back(make_subspace(es.eigenvectors().leftCols(k).transpose()));
  out.push_back(make_subspace(es.eigenvectors().rightCols(k).transpose()));
  for (int i = 0; i < 2; ++i) out.push_back(bodies::sample_grassmann(n, k, derive_seed(seed, i)));
  return out;
}

}  // namespace

Rows check_tilted_projections(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  const auto eval = evaluator(mu, ctx);
  const auto lam = std::make_shared<const loglaplace::LambdaEvaluator>(mu.spec);
  const auto lp = loglaplace::lambda_p_body(lam, p);
  const std::uint64_t seed = check_seed(ctx, "projections:" + mu.family + p_tag(p));

  metrics::QSharpConfig qc;
  metrics::DeltaCurve delta(eval, qc.diameter);
  const double qs = metrics::q_sharp(delta, qc).value.value;
  const double qh = metrics::q_sharp_hereditary(delta, qc).value.value;
  const double diam_p = delta(p).value;
  const double det_mu = metrics::det_cov_root(mu.spec);

  std::vector<Vec> xs{Vec::Zero(n)};
  for (Vec& x : star_points(*lp, 0.5, n_tilts, seed)) xs.push_back(std::move(x));

  const std::vector<int> ks = n >= 2 ? std::vector<int>{1, 2} : std::vector<int>{1};
  const double a_det = std::max(1.0, p / qh);
  const double a_log = std::max(1.0, diam_p * std::sqrt(std::log(p)) / std::sqrt(double(n)));
  double c_sup = kInf, c_lmax = kInf, c_det = kInf, c_log = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const MeasureSpec nu = j == 0 ? mu.spec : loglaplace::tilt(mu.spec, xs[j]);
    McConfig mc = measure_mc(ctx, mu);
    mc.seed = derive_seed(seed, 100 + j);
    const auto nu_eval = j == 0 ? eval : std::make_shared<const MeasureEvaluator>(nu, mc);
    const Mat cov = lam->derivatives(xs[j]).hessian;
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const double lmax = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    const double det_nu = det_root(cov);
    for (int k : ks) {
      double sup = 0.0;
      for (const Subspace& e : flag_subspaces(n, k, cov, derive_seed(seed, 200 + j))) {
        sup = std::max(sup, projected_vrad(nu_eval, k, e, derive_seed(seed, 300 + j)).value);
      }
      c_sup = std::min(c_sup, lmax * std::sqrt(double(k)) / sup);
    }
    c_lmax = std::min(c_lmax, lmax / (std::min(1.0, qs / p) * det_mu));
    c_det = std::min(c_det, det_nu * a_det);
    c_log = std::max(c_log, std::max(0.0, -std::log(det_nu)) / (a_log * a_log));
  }
  double c_her = kInf;
  for (int k : ks) {
    if (k > qs) continue;
    double sup = 0.0;
    for (const Subspace& e :
         flag_subspaces(n, k, measures::covariance(mu.spec), derive_seed(seed, 400))) {
      sup = std::max(sup, projected_vrad(eval, k, e, derive_seed(seed, 401)).value);
    }
    c_her = std::min(c_her, sup / (std::sqrt(double(k)) * det_mu));
  }

  Rows rows;
  auto emit = [&](const char* name, double c, std::vector<std::pair<std::string, double>> details) {
    CheckReport r = start_row(name, mu, ctx);
    r.p = p;
    r.q = qs;
    r.c_sharp = qc.c_sharp;
    r.value = Estimate::exact(c);
    set_constant(r, c, 0.0);
    r.details = std::move(details);
    r.details.emplace_back("tilts", double(xs.size()));
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  };
  emit("projections:tilted_sup", c_sup, {});
  emit("projections:hereditary", c_her, {{"q_sharp", qs}});
  emit("projections:lmax_vs_det", c_lmax, {{"q_sharp", qs}, {"det_cov_root", det_mu}});
  emit("projections:det_vs_qh", c_det, {{"q_sharp_h", qh}, {"A", a_det}});
  emit("projections:det_log_upper", c_log, {{"diam_zp", diam_p}, {"A", a_log}});
  return rows;
}

Rows check_construction_T(int n, double lambda, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must lie in (0, 1)");
  const int m1 = static_cast<int>(std::floor(lambda * n));
  const int m2 = static_cast<int>(std::ceil((1.0 - lambda) * n));
  if (m1 < 1 || m2 < 1 || m1 + m2 != n) {
    throw Error(ErrorCode::kInvalidArgument, "lambda n must leave both factors non-empty");
  }
  const double p = lambda * n;
  const MeasureSpec k1 = MeasureSpec::uniform_cube(m1, std::sqrt(3.0));
  const MeasureSpec k2 = MeasureSpec::uniform_ball(m2, std::sqrt(m2 + 2.0));
  TestMeasure t{"T", MeasureSpec::product({k1, k2}), true};
  std::ostringstream fam;
  fam << "T(lambda=" << lambda << ")";
  const std::string family = fam.str();
  const auto eval_t = evaluator(t, ctx);
  const auto eval_1 = evaluator(TestMeasure{"T:cube", k1, true}, ctx);
  const auto eval_2 = evaluator(TestMeasure{"T:ball", k2, true}, ctx);

  const auto net = bodies::make_net(n, net_size(ctx, n), check_seed(ctx, "product-net"));
  Mat dirs(n, net.directions.cols() + 2);
  dirs.leftCols(net.directions.cols()) = net.directions;
  dirs.col(dirs.cols() - 2) = Vec::Unit(n, 0);
  dirs.col(dirs.cols() - 1) = Vec::Unit(n, n - 1);
  double lo = kInf, hi = -kInf, se_lo = 0.0, se_hi = 0.0;
  for (Eigen::Index i = 0; i < dirs.cols(); ++i) {
    const Vec u = dirs.col(i);
    const Vec u1 = u.head(m1);
    const Vec u2 = u.tail(m2);
    const Estimate h = centroid::zp_support(*eval_t, u, p);
    const Estimate h1 = u1.norm() > 0.0 ? centroid::zp_support(*eval_1, u1, p) : Estimate::exact(0.0);
    const Estimate h2 = u2.norm() > 0.0 ? centroid::zp_support(*eval_2, u2, p) : Estimate::exact(0.0);
    const double sum = h1.value + h2.value;
    const double ratio = h.value / sum;
    const double se = ratio * (h.std_error / h.value + (h1.std_error + h2.std_error) / sum);
    if (ratio < lo) {
      lo = ratio;
      se_lo = se;
    }
    if (ratio > hi) {
      hi = ratio;
      se_hi = se;
    }
  }
  metrics::QSharpConfig qc;
  const auto dres = centroid::zp_diam_search(eval_t, p, qc.diameter);
  const double ball_radius = centroid::zp_support(*eval_2, Vec::Unit(m2, 0), p).value;

  Rows rows;
  auto emit = [&](const char* name, const Estimate& v, double c, double se) {
    CheckReport r = start_row(name, t, ctx);
    r.measure = family;
    r.p = p;
    r.net = static_cast<std::size_t>(dirs.cols());
    r.value = v;
    set_constant(r, c, se);
    r.details = {{"lambda", lambda},
                 {"cube_dim", double(m1)},
                 {"ball_dim", double(m2)},
                 {"ball_zp_radius_over_sqrt_p", ball_radius / std::sqrt(p)},
                 {"diam_upper_bound", dres.upper_bound}};
    r.note = "first factor is the isotropic cube of dim " + std::to_string(m1) +
             " standing in for K_m";
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  };
  Estimate vlo = Estimate::exact(lo);
  vlo.std_error = se_lo;
  Estimate vhi = Estimate::exact(hi);
  vhi.std_error = se_hi;
  emit("construction_T:lower", vlo, lo, se_lo);
  emit("construction_T:upper", vhi, hi, se_hi);
  const double s = 1.0 / std::sqrt(p);
  emit("construction_T", dres.value, dres.value.value * s, dres.value.std_error * s);
  return rows;
}

Rows check_main_theorems(const TestMeasure& mu, const CheckContext& ctx) {
  const auto t0 = Clock::now();
  const int n = mu.spec.dim();
  const auto eval = evaluator(mu, ctx);
  metrics::QSharpConfig qc;
  metrics::DeltaCurve delta(eval, qc.diameter);
  const auto h = metrics::q_sharp_hereditary(delta, qc);
  const auto gh = metrics::q_sharp_geometric(delta, qc);
  const std::vector<double> grid{2.0, 3.0, 4.0, 6.0, 8.0};
  const double b1 = centroid::psi_alpha_constant(*eval, 1.0, grid, 0, check_seed(ctx, "psi1")).value.value;
  const double b2 = centroid::psi_alpha_constant(*eval, 2.0, grid, 0, check_seed(ctx, "psi2")).value.value;
  const double lmu = metrics::isotropic_constant(mu.spec).value;

  Rows rows;
  auto emit = [&](const char* name, const Estimate& v, double c, double se,
                  std::vector<std::pair<std::string, double>> details) {
    CheckReport r = start_row(name, mu, ctx);
    r.q = h.value.value;
    r.c_sharp = qc.c_sharp;
    r.value = v;
    set_constant(r, c, se);
    r.details = std::move(details);
    finish(r, ctx, t0);
    rows.push_back(std::move(r));
  };
  const std::vector<std::pair<std::string, double>> common{
      {"b1", b1}, {"b2", b2}, {"q_sharp_h", h.value.value}, {"q_sharp_gh", gh.value.value},
      {"L_mu", lmu}};
  emit("main:lmu_vs_psi1", Estimate::exact(lmu), lmu / std::sqrt(b1 * std::sqrt(double(n))), 0.0, common);
  emit("main:lmu_vs_psi2", Estimate::exact(lmu), lmu / b2, 0.0, common);

  if (n <= 5) {
    std::map<double, Estimate> vr;
    auto min_over = [&](double pmax, double& arg) {
      double best = kInf;
      for (double p : grid) {
        if (p > std::max(2.0, pmax)) continue;
        auto it = vr.find(p);
        if (it == vr.end()) it = vr.emplace(p, vrad_of(eval, p, ctx)).first;
        const double c = it->second.value / std::sqrt(p);
        if (c < best) {
          best = c;
          arg = p;
        }
      }
      return best;
    };
    double arg = 0.0;
    const double range12 = std::sqrt(double(n)) / b1;
    const double c12 = min_over(range12, arg);
    emit("main:vrad_lower_psi", Estimate::exact(c12), c12, 0.0, {{"p_max", range12}, {"argmin_p", arg}});
    const double c58 = min_over(h.value.value, arg);
    emit("main:vrad_lower_qh", Estimate::exact(c58), c58, 0.0,
         {{"p_max", h.value.value}, {"argmin_p", arg}});
  }

  double c13 = 0.0, c13_p = 2.0;
  for (int p = 2; p <= std::max(2, n); ++p) {
    const double c = delta(p).value * std::sqrt(std::log(double(p))) / std::sqrt(double(n));
    if (c > c13) {
      c13 = c;
      c13_p = p;
    }
  }
  emit("main:diam_log_upper", Estimate::exact(c13), c13, 0.0, {{"argmax_p", c13_p}});

  const double ratio = gh.value.value / h.value.value;
  // H and GH come from the same bisected roots; their tolerance is qc.rtol.
  emit("main:gh_vs_h", gh.value, ratio, ratio * 2.0 * qc.rtol,
       {{"q_sharp_h", h.value.value}, {"q_sharp_gh", gh.value.value}, {"plain_mean", gh.plain_mean}});
  return rows;
}

// ---------------------------------------------------------------- suites

std::vector<std::string> suite_names() {
  return {"core", "tilts", "projections", "construction", "main-theorems", "all"};
}

namespace {

using Job = std::function<Rows()>;

std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void add_suite_jobs(const std::string& name, const SuiteConfig& suite, const CheckContext& ctx,
                    std::vector<std::pair<std::string, Job>>& jobs) {
  const int n = suite.dim;
  const auto measures = standard_suite(n);
  if (name == "core") {
    for (const auto& mu : measures) {
      for (double p : {1.0, 2.0, 4.0}) {
        jobs.emplace_back("lambda_zp_duality/" + mu.family,
                          [mu, p, &ctx] { return check_lambda_zp_duality(mu, p, ctx); });
      }
      jobs.emplace_back("zn_body/" + mu.family, [mu, &ctx] { return check_zn_body(mu, ctx); });
      if (n <= 5) {
        const auto grid = unique_sorted({2.0, 4.0, double(std::max(n, 2))});
        jobs.emplace_back("lyz_and_paouris/" + mu.family,
                          [mu, grid, &ctx] { return check_lyz_and_paouris(mu, grid, ctx); });
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < grid.size(); ++i)
          for (std::size_t j = i + 1; j < grid.size(); ++j) pairs.emplace_back(grid[i], grid[j]);
        if (pairs.empty()) pairs.emplace_back(2.0, 2.0);
        jobs.emplace_back("monotone_ratio/" + mu.family,
                          [mu, pairs, &ctx] { return check_monotone_ratio(mu, pairs, ctx); });
      }
    }
  } else if (name == "tilts") {
    for (const auto& mu : measures) {
      for (double p : {2.0, 4.0}) {
        jobs.emplace_back("tilt_stability/" + mu.family,
                          [mu, p, &ctx] { return check_tilt_stability(mu, p, 20, ctx); });
        if (n <= 5) {
          jobs.emplace_back("vrad_formula/" + mu.family,
                            [mu, p, &ctx] { return check_vrad_formula(mu, p, 20, ctx); });
        }
      }
    }
  } else if (name == "projections") {
    for (const auto& mu : measures) {
      for (double p : {2.0, 4.0}) {
        if (p > n) continue;
        jobs.emplace_back("projections/" + mu.family,
                          [mu, p, &ctx] { return check_tilted_projections(mu, p, 4, ctx); });
      }
    }
  } else if (name == "construction") {
    const std::vector<double> lambdas =
        suite.lambdas.empty() ? std::vector<double>{0.25, 0.5} : suite.lambdas;
    for (double l : lambdas) {
      if (std::floor(l * n) < 1.0 || std::ceil((1.0 - l) * n) < 1.0) continue;
      jobs.emplace_back("construction_T", [n, l, &ctx] { return check_construction_T(n, l, ctx); });
    }
  } else if (name == "main-theorems") {
    for (const auto& mu : measures) {
      jobs.emplace_back("main_theorems/" + mu.family,
                        [mu, &ctx] { return check_main_theorems(mu, ctx); });
    }
  } else {
    throw Error(ErrorCode::kConfig, "unknown suite " + name);
  }
}

}  // namespace

Rows run_suite(const SuiteConfig& suite, const CheckContext& ctx) {
  if (ctx.envelopes == nullptr) throw Error(ErrorCode::kConfig, "no envelope set");
  if (suite.dim < 1) throw Error(ErrorCode::kConfig, "dimension must be positive");
  std::vector<std::pair<std::string, Job>> jobs;
  if (suite.name == "all") {
    for (const auto& s : suite_names()) {
      if (s != "all") add_suite_jobs(s, suite, ctx, jobs);
    }
  } else {
    add_suite_jobs(suite.name, suite, ctx, jobs);
  }
  auto guarded = [&](std::size_t i) -> Rows {
    const auto t0 = Clock::now();
    try {
      return jobs[i].second();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      CheckReport r;
      r.check = jobs[i].first;
      r.dim = suite.dim;
      r.value = Estimate::exact(kNotApplicable);
      r.constant = kNotApplicable;
      r.pass = false;
      r.note = e.what();
      r.seed = ctx.seed;
      r.runtime_ms = ms_since(t0);
      return {r};
    }
  };
  std::vector<Rows> results(jobs.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, suite.jobs));
  if (width == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = guarded(i);
  } else {
    for (std::size_t b = 0; b < jobs.size(); b += width) {
      std::vector<std::future<Rows>> batch;
      for (std::size_t i = b; i < std::min(jobs.size(), b + width); ++i) {
        batch.push_back(std::async(std::launch::async, guarded, i));
      }
      for (std::size_t i = 0; i < batch.size(); ++i) results[b + i] = batch[i].get();
    }
  }
  Rows out;
  for (auto& r : results) {
    for (auto& row : r) out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------- reports

namespace {

const char* kCsvHeader =
    "check,measure,dim,p,q,c_sharp,value,stderr,constant,envelope_lo,envelope_hi,pass,runtime_ms,seed";

std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string to_csv(const Rows& rows) {
  std::ostringstream os;
  os << "# " << kReportSchema << "\n" << kCsvHeader << "\n";
  for (const auto& r : rows) {
    char rt[32];
    std::snprintf(rt, sizeof rt, "%.3f", r.runtime_ms);
    os << r.check << ',' << r.measure << ',' << r.dim << ',' << num(r.p) << ',' << num(r.q) << ','
       << num(r.c_sharp) << ',' << num(r.value.value) << ',' << num(r.value.std_error) << ','
       << num(r.constant) << ',' << num(r.envelope.lo) << ',' << num(r.envelope.hi) << ','
       << (r.pass ? "true" : "false") << ',' << rt << ',' << r.seed << "\n";
  }
  return os.str();
}

std::string to_json(const Rows& rows, const std::map<std::string, std::string>& meta) {
  json doc;
  doc["schema"] = kReportSchema;
  doc["meta"] = json::object();
  for (const auto& [k, v] : meta) doc["meta"][k] = v;
  doc["rows"] = json::array();
  for (const auto& r : rows) {
    json j;
    j["check"] = r.check;
    j["measure"] = r.measure;
    j["descriptor"] = r.descriptor;
    j["dim"] = r.dim;
    j["p"] = num_json(r.p);
    j["q"] = num_json(r.q);
    j["c_sharp"] = num_json(r.c_sharp);
    j["value"] = num_json(r.value.value);
    j["stderr"] = num_json(r.value.std_error);
    j["n_samples"] = r.value.n_samples;
    j["n_batches"] = r.value.n_batches;
    j["flagged"] = r.value.flagged;
    j["constant"] = num_json(r.constant);
    j["constant_stderr"] = num_json(r.constant_stderr);
    j["envelope"] = json::array({num_json(r.envelope.lo), num_json(r.envelope.hi)});
    j["pass"] = r.pass;
    j["runtime_ms"] = r.runtime_ms;
    j["seed"] = r.seed;
    j["net"] = r.net;
    j["samples"] = r.samples;
    j["details"] = json::object();
    for (const auto& [k, v] : r.details) j["details"][k] = num_json(v);
    if (!r.note.empty()) j["note"] = r.note;
    doc["rows"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

void write_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(fnv1a(contents) & 0xffff);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kConfig, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::kConfig, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::kConfig, "cannot rename into " + path);
  }
}

std::vector<ReportRow> parse_csv_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kConfig, "empty report");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != std::string("# ") + kReportSchema) {
    throw Error(ErrorCode::kConfig, "report schema mismatch: expected '# " +
                                        std::string(kReportSchema) + "', found '" + line + "'");
  }
  if (!std::getline(in, line)) throw Error(ErrorCode::kConfig, "report has no header");
  const auto header = split_csv_line(line);
  if (header != split_csv_line(kCsvHeader)) throw Error(ErrorCode::kConfig, "unexpected report header");
  std::vector<ReportRow> rows;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(lineno) + ": expected " +
                                          std::to_string(header.size()) + " fields");
    }
    ReportRow r;
    for (std::size_t i = 0; i < cells.size(); ++i) r.fields[header[i]] = cells[i];
    for (const char* key : {"dim", "p", "q", "c_sharp", "value", "stderr", "constant",
                            "envelope_lo", "envelope_hi", "runtime_ms"}) {
      const std::string& s = r.fields[key];
      if (s.empty() || s == "inf" || s == "-inf") continue;
      try {
        std::size_t pos = 0;
        (void)std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig, "line " + std::to_string(lineno) + ": bad number in " + key);
      }
    }
    if (r.fields["pass"] != "true" && r.fields["pass"] != "false") {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(lineno) + ": bad pass flag");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace clab::verify
