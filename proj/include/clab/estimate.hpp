#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

namespace clab {

// A scalar with its Monte Carlo error bar. n_batches == 0 marks an analytic
// (closed-form or quadrature) evaluation.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
  int n_batches = 0;
  std::uint64_t seed = 0;
  bool flagged = false;  // low effective sample size, clamped root, ...

  static Estimate exact(double v) { return Estimate{v, 0.0, 0, 0, 0, false}; }

  bool is_exact() const { return n_batches == 0; }
};

// Shared Monte Carlo knobs. The sample is drawn once per evaluator and reused
// for every query (common random numbers).
struct McConfig {
  std::size_t samples = std::size_t{1} << 20;
  int batches = 16;
  std::uint64_t seed = 0x5eedULL;
};

// Mean and standard error from per-batch weighted means. `values` and
// `weights` are aligned; batch b covers indices [b*N/B, (b+1)*N/B).
Estimate batch_mean(std::span<const double> values,
                    std::span<const double> weights, int batches,
                    std::uint64_t seed);

// Propagates an estimate through a smooth scalar map with derivative `slope`
// at the estimate (delta method).
Estimate propagate(const Estimate& e, double new_value, double slope);

std::string format_estimate(const Estimate& e);

}  // namespace clab
