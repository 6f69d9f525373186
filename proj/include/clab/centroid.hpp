#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "clab/bodies.hpp"
#include "clab/estimate.hpp"
#include "clab/measures.hpp"

namespace clab::centroid {

using measures::MeasureEvaluator;
using measures::MeasureSpec;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Z_p(mu) with h(theta) = (E|<X, theta>|^p)^{1/p}. p = kInfinity gives
// conv(supp, -supp) for compactly supported measures.
bodies::BodyHandle zp_body(std::shared_ptr<const MeasureEvaluator> mu, double p);
bodies::BodyHandle zp_body(const MeasureSpec& mu, double p, const McConfig& mc = {});

Estimate zp_support(const MeasureEvaluator& mu, const Vec& theta, double p);

bodies::DiameterResult zp_diam_search(std::shared_ptr<const MeasureEvaluator> mu, double p,
                                      const bodies::DiameterConfig& cfg = {});
Estimate zp_diam(const MeasureSpec& mu, double p, const McConfig& mc = {});

enum class VradRoute {
  kAuto,    // closed form when available, hull sandwich up to dim 6, radial beyond
  kHull,    // inner hull of boundary points and outer polytope of supporting halfspaces
  kRadial,  // spherical average of radial values obtained from the support oracle
};

struct VradConfig {
  VradRoute route = VradRoute::kAuto;
  std::size_t directions = 0;  // 0: chosen from the dimension
  std::uint64_t seed = 0x7a11ULL;
};

struct VradSandwich {
  double inner = 0.0;  // V.Rad. of conv(boundary points)
  double outer = 0.0;  // V.Rad. of the intersection of supporting halfspaces (sphere average)
  Estimate value;      // inner^{1/3} outer^{2/3}, error bar half the gap
};

// Works for any body with a support gradient and dim <= 6.
VradSandwich vrad_sandwich(const bodies::Body& body, std::size_t directions, std::uint64_t seed);

Estimate zp_vrad(std::shared_ptr<const MeasureEvaluator> mu, double p,
                 const VradConfig& cfg = {});
Estimate zp_vrad(const MeasureSpec& mu, double p, const McConfig& mc = {},
                 const VradConfig& cfg = {});

struct PsiAlphaResult {
  Estimate value;  // max over the grid and the net
  double p_at = 0.0;
  Vec theta_at;
  std::vector<double> grid;
  std::size_t net_size = 0;
};

// max over p in grid and theta in a net of h_{Z_p}(theta) / (p^{1/alpha} h_{Z_2}(theta)).
PsiAlphaResult psi_alpha_constant(const MeasureEvaluator& mu, double alpha,
                                  const std::vector<double>& p_grid, std::size_t net_size = 0,
                                  std::uint64_t seed = 0x95a1ULL);

// (E|X|^q)^{1/q}.
Estimate iq_norm(const MeasureEvaluator& mu, double q);
Estimate iq_norm(const MeasureSpec& mu, double q, const McConfig& mc = {});

}  // namespace clab::centroid
