#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clab/estimate.hpp"
#include "clab/measures.hpp"

namespace clab::verify {

using measures::MeasureSpec;

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct Envelope {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

// Pass envelopes, keyed by check row name and measure family ("default" as
// fallback). Loaded from a versioned JSON file whose "provenance.hash" must
// match the FNV-1a hash of its "checks" object.
class EnvelopeSet {
 public:
  // require_hash = false is only for regenerating the file.
  static EnvelopeSet parse(const std::string& text, bool require_hash = true);
  static EnvelopeSet load(const std::string& path, bool require_hash = true);

  Envelope get(const std::string& row, const std::string& family) const;
  bool has(const std::string& row) const { return table_.count(row) > 0; }
  const std::string& hash() const { return hash_; }
  const std::string& text() const { return text_; }

 private:
  std::map<std::string, std::map<std::string, Envelope>> table_;
  std::string hash_;
  std::string text_;
};

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

// One row of a verification report.
struct CheckReport {
  std::string check;
  std::string measure;  // family name
  std::string descriptor;
  int dim = 0;
  double p = kNotApplicable;
  double q = kNotApplicable;
  double c_sharp = kNotApplicable;
  Estimate value;         // measured quantity
  double constant = 0.0;  // empirical constant compared with the envelope
  double constant_stderr = 0.0;
  Envelope envelope;
  bool pass = false;
  double runtime_ms = 0.0;
  std::uint64_t seed = 0;
  std::size_t net = 0;
  std::size_t samples = 0;
  std::vector<std::pair<std::string, double>> details;
  std::string note;
};

// A measure of the test suite together with its family name.
struct TestMeasure {
  std::string family;
  MeasureSpec spec;
  bool uniform = false;  // uniform on a convex body
};

// "gaussian", "cube", "ball" or "simplex", in isotropic position.
TestMeasure make_test_measure(const std::string& family, int dim);
std::vector<TestMeasure> standard_suite(int dim);

struct CheckContext {
  const EnvelopeSet* envelopes = nullptr;
  McConfig mc;
  std::size_t net = 0;  // direction net size, 0: chosen from the dimension
  std::uint64_t seed = 0x5eedULL;
  double slack = 4.0;   // stderr multiples allowed outside the envelope
};

using Rows = std::vector<CheckReport>;

Rows check_lambda_zp_duality(const TestMeasure& mu, double p, const CheckContext& ctx);
Rows check_zn_body(const TestMeasure& mu, const CheckContext& ctx);
Rows check_lyz_and_paouris(const TestMeasure& mu, const std::vector<double>& p_grid,
                           const CheckContext& ctx);
Rows check_tilt_stability(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx);
Rows check_vrad_formula(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx);
Rows check_monotone_ratio(const TestMeasure& mu, const std::vector<std::pair<double, double>>& pairs,
                          const CheckContext& ctx);
Rows check_tilted_projections(const TestMeasure& mu, double p, int n_tilts, const CheckContext& ctx);
// T = C_{floor(lambda n)} x D_{ceil((1 - lambda) n)} with the isotropic cube
// in place of the first factor.
Rows check_construction_T(int n, double lambda, const CheckContext& ctx);
Rows check_main_theorems(const TestMeasure& mu, const CheckContext& ctx);

struct SuiteConfig {
  std::string name = "core";  // core, tilts, projections, construction, main-theorems, all
  int dim = 4;
  std::vector<double> lambdas;  // construction; empty: {1/4, 1/2}
  int jobs = 1;
};

std::vector<std::string> suite_names();
// Runs the suite; rows come back in job order whatever the job count.
Rows run_suite(const SuiteConfig& suite, const CheckContext& ctx);

// Envelopes recomputed from a calibration run: entries marked "calibrated"
// get the observed range widened by their margin; "fixed" entries are kept.
std::string calibrate_envelopes(const EnvelopeSet& base, const Rows& rows,
                                const std::map<std::string, std::string>& provenance);

inline constexpr const char* kReportSchema = "clab-report v1";

std::string to_csv(const Rows& rows);
std::string to_json(const Rows& rows, const std::map<std::string, std::string>& meta);
// Writes through a temporary file in the same directory and renames it.
void write_atomic(const std::string& path, const std::string& contents);

// Parsed report row, for aggregation.
struct ReportRow {
  std::map<std::string, std::string> fields;
};
// Throws kConfig on a schema mismatch or a malformed file.
std::vector<ReportRow> parse_csv_report(const std::string& text);

}  // namespace clab::verify
