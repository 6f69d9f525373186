#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>

#include "clab/bodies.hpp"
#include "clab/estimate.hpp"
#include "clab/measures.hpp"

namespace clab::loglaplace {

using measures::MeasureSpec;

enum class Mode {
  kAuto,        // closed form or quadrature where available
  kMonteCarlo,  // empirical transform of one fixed sample of the measure
};

struct Derivatives {
  Vec gradient;
  Mat hessian;
};

struct Evaluation {
  Estimate value;
  Vec gradient;
  Mat hessian;
};

// log E e^{<xi, X>}. In Monte Carlo mode a single sample is drawn on first
// use and reused for every xi.
class LambdaEvaluator {
 public:
  explicit LambdaEvaluator(MeasureSpec spec, Mode mode = Mode::kAuto, McConfig mc = {});

  const MeasureSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim(); }
  Mode mode() const { return mode_; }
  // "closed-form", "quadrature", "empirical" or "monte-carlo".
  std::string mode_name() const;
  bool exact() const { return mode_ == Mode::kAuto; }

  Estimate value(const Vec& xi) const;
  Derivatives derivatives(const Vec& xi) const;
  Evaluation evaluate(const Vec& xi, int order = 2) const;

 private:
  const measures::WeightedSample& mc_sample() const;

  MeasureSpec spec_;
  Mode mode_;
  McConfig mc_;
  mutable std::once_flag once_;
  mutable std::shared_ptr<measures::WeightedSample> sample_;
};

Estimate lambda_eval(const MeasureSpec& spec, const Vec& xi, Mode mode = Mode::kAuto,
                     const McConfig& mc = {});
Derivatives lambda_derivatives(const MeasureSpec& spec, const Vec& xi,
                               Mode mode = Mode::kAuto, const McConfig& mc = {});

// Recentered tilt. Gaussians map to themselves; products, affine images,
// projections and repeated tilts are normalized so that Tilt nodes only wrap
// bounded or empirical measures.
MeasureSpec tilt(const MeasureSpec& spec, const Vec& xi);

// exp divided difference exp[z_0, ..., z_m] (nodes may repeat), accurate to
// a few ulps relative for clustered or widely spread nodes.
double exp_divided_difference(std::span<const double> nodes);

struct LevelSetConfig {
  double rtol = 0.0;  // 0: 1e-10 for exact evaluators, 1e-6 for Monte Carlo
  int max_doublings = 64;
};

// Radial-only body {Lambda <= p} cap -{Lambda <= p}.
bodies::BodyHandle lambda_p_body(std::shared_ptr<const LambdaEvaluator> lambda, double p,
                                 LevelSetConfig cfg = {});
bodies::BodyHandle lambda_p_body(const MeasureSpec& spec, double p, Mode mode = Mode::kAuto,
                                 const McConfig& mc = {});

// Points of s * K for a star body K given by its radial oracle: uniform
// direction u, radius s r(u) V^{1/n}, weight proportional to r(u)^n. The
// weighted cloud is uniform on s * K; `resample` turns it into an unweighted
// one by multinomial resampling.
struct StarSample {
  Mat points;  // dim x count
  Vec weights;
  Vec radii;   // r(u) per point
};
StarSample sample_star_body(const bodies::Body& body, double s, std::size_t count,
                            std::uint64_t seed);
Mat resample(const StarSample& sample, std::size_t count, std::uint64_t seed);

struct PsiConfig {
  std::size_t points = 2048;
  int batches = 16;
  std::uint64_t seed = 0x9519ULL;
};

// (average of det Hess Lambda over (1/2) Lambda_p)^{1/n}.
Estimate psi_p_estimate(std::shared_ptr<const LambdaEvaluator> lambda, double p,
                        const PsiConfig& cfg = {});
Estimate psi_p_estimate(const MeasureSpec& spec, double p, std::size_t n_points,
                        std::uint64_t seed);

}  // namespace clab::loglaplace
