#pragma once

#include <map>
#include <memory>
#include <vector>

#include "clab/bodies.hpp"
#include "clab/centroid.hpp"
#include "clab/estimate.hpp"
#include "clab/measures.hpp"

namespace clab::metrics {

using measures::MeasureEvaluator;
using measures::MeasureSpec;

// ||mu||_inf^{1/n} det Cov^{1/2n}.
Estimate isotropic_constant(const MeasureSpec& mu);

// det Cov(mu)^{1/2n}.
double det_cov_root(const MeasureSpec& mu);

struct KStar {
  Estimate value;  // n (W / diam)^2
  Estimate mean_width;
  Estimate diameter;
};
KStar kstar(const bodies::Body& body, const bodies::SphereConfig& sphere = {},
            const bodies::DiameterConfig& diam = {});

struct QSharpConfig {
  double c_sharp = 1.0;
  double q_min = 1.0;
  double q_max = 0.0;  // 0: the dimension
  double rtol = 1e-3;
  double grid_ratio = 1.25;
  double isotropy_tol = 1e-6;
  bodies::DiameterConfig diameter = [] {
    bodies::DiameterConfig d;
    d.starts = 4;
    d.net_size = 128;
    return d;
  }();
};

// q -> diam Z_q(mu), memoized. Searches are warm-started from the last
// maximizing direction.
class DeltaCurve {
 public:
  DeltaCurve(std::shared_ptr<const MeasureEvaluator> mu, bodies::DiameterConfig cfg = {});

  Estimate operator()(double q);
  const MeasureEvaluator& measure() const { return *mu_; }
  const std::map<double, Estimate>& evaluated() const { return cache_; }

  // Largest q in [lo, hi] with Delta(q) <= level, by bisection to relative
  // tolerance rtol. `clamped` is set when the answer is an endpoint.
  struct Root {
    double q = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool clamped_low = false;
    bool clamped_high = false;
    bool flagged = false;
  };
  Root last_below(double level, double lo, double hi, double rtol);

 private:
  std::shared_ptr<const MeasureEvaluator> mu_;
  bodies::DiameterConfig cfg_;
  std::map<double, Estimate> cache_;
  Vec warm_;
};

struct QSharpResult {
  Estimate value;
  double threshold = 0.0;  // c# sqrt(n) det Cov^{1/2n}
  bool clamped_low = false;
  bool clamped_high = false;
};
QSharpResult q_sharp(DeltaCurve& delta, const QSharpConfig& cfg = {});
QSharpResult q_sharp(const MeasureSpec& mu, const QSharpConfig& cfg = {}, const McConfig& mc = {});

struct HereditaryResult {
  Estimate value;  // n c#^2 inf_q q / Delta(q)^2 over the grid
  double q_sharp = 0.0;
  double argmin_q = 0.0;
  std::vector<double> grid;
};
HereditaryResult q_sharp_hereditary(DeltaCurve& delta, const QSharpConfig& cfg = {});
HereditaryResult q_sharp_hereditary(const MeasureSpec& mu, const QSharpConfig& cfg = {},
                                    const McConfig& mc = {});

struct GeometricResult {
  Estimate value;       // n (prod_k r_k / k)^{1/n}
  double plain_mean = 0.0;  // (prod_k r_k)^{1/n}
  std::vector<double> roots;  // r_k = Delta^{-1}(c# sqrt(k)), clamped to [1, n]
  std::vector<bool> clamped;
  double product_bound = 0.0;  // (prod_k k / r_k)^{1/2n}
};
GeometricResult q_sharp_geometric(DeltaCurve& delta, const QSharpConfig& cfg = {});
GeometricResult q_sharp_geometric(const MeasureSpec& mu, const QSharpConfig& cfg = {},
                                  const McConfig& mc = {});

struct Properties {
  bool p1 = false;        // k*(Z_q) >= q / delta^2
  bool p1_prime = false;  // diam Z_q <= delta sqrt(n) W(Z_q) / sqrt(q)
  bool p2 = false;        // diam Z_q <= delta sqrt(n) det Cov^{1/2n}
  bool pw = false;        // W(Z_q) >= c sqrt(q) det Cov^{1/2n}
  double diameter = 0.0;
  double mean_width = 0.0;
  double kstar = 0.0;
  double det_cov_root = 0.0;
};
Properties check_properties(const MeasureSpec& mu, double q, double delta, double pw_c = 0.1,
                            const McConfig& mc = {});

}  // namespace clab::metrics
