#include "clab/estimate.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "clab/error.hpp"

namespace clab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kTiltOutsideDomain: return "TiltOutsideDomain";
    case ErrorCode::kDegenerateSpec: return "DegenerateSpec";
    case ErrorCode::kSingularCovariance: return "SingularCovariance";
    case ErrorCode::kNonOrthonormalBasis: return "NonOrthonormalBasis";
    case ErrorCode::kUnsupportedVariant: return "UnsupportedVariant";
    case ErrorCode::kNoSupportOracle: return "NoSupportOracle";
    case ErrorCode::kNoRadialOracle: return "NoRadialOracle";
    case ErrorCode::kOriginNotInterior: return "OriginNotInterior";
    case ErrorCode::kDegenerateHull: return "DegenerateHull";
    case ErrorCode::kDimTooLarge: return "DimTooLarge";
    case ErrorCode::kNonSmoothAtDirection: return "NonSmoothAtDirection";
    case ErrorCode::kInfiniteMoment: return "InfiniteMoment";
    case ErrorCode::kOutsideDomain: return "OutsideDomain";
    case ErrorCode::kRootBracketFailure: return "RootBracketFailure";
    case ErrorCode::kNotIsotropic: return "NotIsotropic";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

Estimate batch_mean(std::span<const double> values,
                    std::span<const double> weights, int batches,
                    std::uint64_t seed) {
  const std::size_t n = values.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty sample");
  batches = std::max(1, std::min<int>(batches, static_cast<int>(n)));
  std::vector<double> means(batches);
  std::vector<double> masses(batches);
  double total = 0.0;
  double total_w = 0.0;
  for (int b = 0; b < batches; ++b) {
    const std::size_t lo = n * b / batches;
    const std::size_t hi = n * (b + 1) / batches;
    double s = 0.0;
    double w = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double wi = weights.empty() ? 1.0 : weights[i];
      s += wi * values[i];
      w += wi;
    }
    means[b] = w > 0.0 ? s / w : 0.0;
    masses[b] = w;
    total += s;
    total_w += w;
  }
  Estimate e;
  e.value = total / total_w;
  e.n_samples = static_cast<std::int64_t>(n);
  e.n_batches = batches;
  e.seed = seed;
  if (batches > 1) {
    double ss = 0.0;
    double mean_mass = total_w / batches;
    for (int b = 0; b < batches; ++b) {
      // Mass-weighted deviation keeps self-normalized weights honest.
      const double d = (means[b] - e.value) * masses[b] / mean_mass;
      ss += d * d;
    }
    e.std_error = std::sqrt(ss / (batches - 1) / batches);
  }
  return e;
}

Estimate propagate(const Estimate& e, double new_value, double slope) {
  Estimate out = e;
  out.value = new_value;
  out.std_error = std::fabs(slope) * e.std_error;
  return out;
}

std::string format_estimate(const Estimate& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.12g +/- %.3g", e.value, e.std_error);
  return buf;
}

}  // namespace clab
