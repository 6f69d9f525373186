#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "clab/centroid.hpp"
#include "clab/error.hpp"
#include "clab/io.hpp"
#include "clab/loglaplace.hpp"
#include "clab/metrics.hpp"
#include "clab/rng.hpp"
#include "clab/verify.hpp"

#ifndef CLAB_DEFAULT_ENVELOPES
#define CLAB_DEFAULT_ENVELOPES "config/envelopes.json"
#endif

namespace clab::cli {

namespace {

using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;

struct RunConfig {
  std::uint64_t seed = 0x5eedULL;
  std::size_t samples = std::size_t{1} << 20;
  int batches = 16;
  std::size_t net = 0;
  int jobs = 1;
  std::string format;
  std::string out;
  std::string envelopes = CLAB_DEFAULT_ENVELOPES;
  std::string measure;
  std::optional<double> p;
  std::optional<double> q;
  std::optional<double> alpha;
  std::string xi;
  double c_sharp = 1.0;
  std::string mode = "auto";
  std::string suite = "core";
  int dim = 4;
  std::string dims = "2,3,4";
  std::vector<double> lambdas;
  std::string quantity;
  std::vector<std::string> files;
};

// Verification and calibration default to a smaller sample than single
// estimates; --samples overrides both.
constexpr std::size_t kVerifySamples = std::size_t{1} << 16;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

void add_common(CLI::App* app, RunConfig& cfg, CLI::Option** samples_opt) {
  app->add_option("--seed", cfg.seed, "random seed")->envname("CLAB_SEED");
  *samples_opt = app->add_option("--samples", cfg.samples, "Monte Carlo sample size")
                     ->envname("CLAB_SAMPLES");
  app->add_option("--batches", cfg.batches, "batches for standard errors")->envname("CLAB_BATCHES");
  app->add_option("--net", cfg.net, "direction net size (0: by dimension)")->envname("CLAB_NET");
  app->add_option("--jobs", cfg.jobs, "parallel jobs")->envname("CLAB_JOBS");
  app->add_option("--out", cfg.out, "output file")->envname("CLAB_OUT");
  app->add_option("--format", cfg.format, "json or csv")
      ->envname("CLAB_FORMAT")
      ->check(CLI::IsMember({"json", "csv"}));
}

McConfig mc_of(const RunConfig& cfg) {
  if (cfg.batches < 2) config_error("--batches must be at least 2");
  if (cfg.samples < static_cast<std::size_t>(cfg.batches)) config_error("--samples must be >= --batches");
  McConfig mc;
  mc.samples = cfg.samples;
  mc.batches = cfg.batches;
  mc.seed = cfg.seed;
  return mc;
}

double need(const std::optional<double>& v, const char* flag) {
  if (!v) config_error(std::string("this quantity needs ") + flag);
  return *v;
}

Vec need_xi(const RunConfig& cfg, int dim) {
  if (cfg.xi.empty()) config_error("this quantity needs --xi");
  const Vec xi = io::parse_vector(cfg.xi);
  if (xi.size() != dim) config_error("--xi has the wrong length for the measure");
  return xi;
}

loglaplace::Mode mode_of(const RunConfig& cfg) {
  if (cfg.mode == "auto") return loglaplace::Mode::kAuto;
  if (cfg.mode == "mc") return loglaplace::Mode::kMonteCarlo;
  config_error("--mode must be auto or mc");
}

void emit(const std::string& text, const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) {
    out << text;
  } else {
    verify::write_atomic(cfg.out, text);
  }
}

json estimate_json(const Estimate& e) {
  json j;
  j["value"] = e.value;
  j["stderr"] = e.std_error;
  j["n_samples"] = e.n_samples;
  j["n_batches"] = e.n_batches;
  j["seed"] = e.seed;
  j["flagged"] = e.flagged;
  return j;
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

const std::vector<std::string> kQuantities{"zp-support", "zp-vrad", "zp-diam",  "lambda",
                                           "lambda-p",   "tilt-cov", "psi-alpha", "iq",
                                           "lmu",        "qsharp",  "qsharp-h", "qsharp-gh"};

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.measure.empty()) config_error("--measure is required");
  const McConfig mc = mc_of(cfg);
  const measures::MeasureSpec mu = io::load_measure(cfg.measure);
  const int n = mu.dim();
  const auto eval = std::make_shared<const measures::MeasureEvaluator>(mu, mc);
  const std::string& what = cfg.quantity;
  json rec;
  rec["quantity"] = what;
  rec["measure"] = mu.describe();
  rec["dim"] = n;
  Estimate e;
  metrics::QSharpConfig qc;
  qc.c_sharp = cfg.c_sharp;
  qc.diameter.seed = derive_seed(cfg.seed, 0xd1a3);
  if (cfg.net > 0) qc.diameter.net_size = cfg.net;

  if (what == "zp-support") {
    const double p = need(cfg.p, "--p");
    e = centroid::zp_support(*eval, need_xi(cfg, n), p);
    rec["p"] = p;
  } else if (what == "zp-vrad") {
    const double p = need(cfg.p, "--p");
    centroid::VradConfig vc;
    vc.directions = cfg.net;
    vc.seed = derive_seed(cfg.seed, 0x7a11);
    e = centroid::zp_vrad(eval, p, vc);
    rec["p"] = p;
  } else if (what == "zp-diam") {
    const double p = need(cfg.p, "--p");
    const auto r = centroid::zp_diam_search(eval, p, qc.diameter);
    e = r.value;
    rec["p"] = p;
    rec["upper_bound"] = r.upper_bound;
    rec["converged"] = r.converged;
  } else if (what == "lambda") {
    const loglaplace::LambdaEvaluator lam(mu, mode_of(cfg), mc);
    e = lam.value(need_xi(cfg, n));
    rec["mode"] = lam.mode_name();
  } else if (what == "lambda-p") {
    const double p = need(cfg.p, "--p");
    const auto lam = std::make_shared<const loglaplace::LambdaEvaluator>(mu, mode_of(cfg), mc);
    const auto body = loglaplace::lambda_p_body(lam, p);
    rec["p"] = p;
    rec["mode"] = lam->mode_name();
    if (!cfg.xi.empty()) {
      e = body->radial(need_xi(cfg, n));
      rec["statistic"] = "radial";
    } else {
      bodies::SphereConfig sc;
      sc.directions = cfg.net;
      sc.seed = derive_seed(cfg.seed, 0x5bee);
      e = bodies::vrad_radial(*body, sc);
      rec["statistic"] = "vrad";
    }
  } else if (what == "tilt-cov") {
    const loglaplace::LambdaEvaluator lam(mu, mode_of(cfg), mc);
    const auto ev = lam.evaluate(need_xi(cfg, n), 2);
    e = ev.value;
    e.value = std::pow(numerics::clipped_det(ev.hessian), 1.0 / (2.0 * n));
    e.std_error = 0.0;
    rec["statistic"] = "det_cov_root";
    rec["covariance"] = matrix_json(ev.hessian);
    rec["barycenter"] = matrix_json(ev.gradient.transpose());
    rec["mode"] = lam.mode_name();
  } else if (what == "psi-alpha") {
    const double alpha = need(cfg.alpha, "--alpha");
    const std::vector<double> grid{2, 3, 4, 6, 8, 12, 16};
    const auto r = centroid::psi_alpha_constant(*eval, alpha, grid, cfg.net,
                                                derive_seed(cfg.seed, 0x95a1));
    e = r.value;
    rec["alpha"] = alpha;
    rec["p_at"] = r.p_at;
    rec["grid"] = r.grid;
    rec["net"] = r.net_size;
  } else if (what == "iq") {
    const double q = need(cfg.q, "--q");
    e = centroid::iq_norm(*eval, q);
    rec["q"] = q;
  } else if (what == "lmu") {
    e = metrics::isotropic_constant(mu);
  } else if (what == "qsharp") {
    metrics::DeltaCurve delta(eval, qc.diameter);
    const auto r = metrics::q_sharp(delta, qc);
    e = r.value;
    rec["c_sharp"] = cfg.c_sharp;
    rec["threshold"] = r.threshold;
    rec["clamped_low"] = r.clamped_low;
    rec["clamped_high"] = r.clamped_high;
  } else if (what == "qsharp-h") {
    metrics::DeltaCurve delta(eval, qc.diameter);
    const auto r = metrics::q_sharp_hereditary(delta, qc);
    e = r.value;
    rec["c_sharp"] = cfg.c_sharp;
    rec["q_sharp"] = r.q_sharp;
    rec["argmin_q"] = r.argmin_q;
  } else if (what == "qsharp-gh") {
    metrics::DeltaCurve delta(eval, qc.diameter);
    const auto r = metrics::q_sharp_geometric(delta, qc);
    e = r.value;
    rec["c_sharp"] = cfg.c_sharp;
    rec["plain_mean"] = r.plain_mean;
    rec["roots"] = r.roots;
    rec["product_bound"] = r.product_bound;
  } else {
    config_error("unknown quantity " + what);
  }
  const json est = estimate_json(e);
  for (const auto& [k, v] : est.items()) rec[k] = v;

  if (cfg.format == "csv") {
    std::ostringstream os;
    os << "quantity,measure,value,stderr,n_samples,n_batches,seed,flagged\n";
    os << what << ',' << '"' << mu.describe() << '"' << ',' << std::setprecision(17) << e.value
       << ',' << e.std_error << ',' << e.n_samples << ',' << e.n_batches << ',' << e.seed << ','
       << (e.flagged ? "true" : "false") << "\n";
    emit(os.str(), cfg, out);
  } else {
    emit(rec.dump() + "\n", cfg, out);
  }
  return kOk;
}

std::map<std::string, std::string> run_meta(const RunConfig& cfg, const verify::EnvelopeSet& env) {
  return {{"seed", std::to_string(cfg.seed)},
          {"samples", std::to_string(cfg.samples)},
          {"batches", std::to_string(cfg.batches)},
          {"net", std::to_string(cfg.net)},
          {"suite", cfg.suite},
          {"envelope_hash", env.hash()}};
}

void print_rows(const verify::Rows& rows, std::ostream& out) {
  for (const auto& r : rows) {
    out << (r.pass ? "PASS " : "FAIL ") << r.check << " " << r.measure << " dim=" << r.dim;
    if (!std::isnan(r.p)) out << " p=" << r.p;
    out << " constant=" << std::setprecision(6) << r.constant << " envelope=[" << r.envelope.lo
        << ", " << r.envelope.hi << "]";
    if (!r.note.empty()) out << " note: " << r.note;
    out << "\n";
  }
}

// Older suite names are still accepted.
std::string canonical_suite(const std::string& name) {
  if (name == "section5") return "projections";
  if (name == "section6") return "construction";
  return name;
}

int cmd_verify(RunConfig cfg, bool samples_given, std::ostream& out) {
  if (!samples_given) cfg.samples = kVerifySamples;
  const McConfig mc = mc_of(cfg);
  if (cfg.jobs < 1) config_error("--jobs must be positive");
  cfg.suite = canonical_suite(cfg.suite);
  const auto names = verify::suite_names();
  if (std::find(names.begin(), names.end(), cfg.suite) == names.end()) {
    config_error("unknown suite " + cfg.suite);
  }
  const verify::EnvelopeSet env = verify::EnvelopeSet::load(cfg.envelopes);
  verify::CheckContext ctx;
  ctx.envelopes = &env;
  ctx.mc = mc;
  ctx.net = cfg.net;
  ctx.seed = cfg.seed;
  verify::SuiteConfig sc;
  sc.name = cfg.suite;
  sc.dim = cfg.dim;
  sc.lambdas = cfg.lambdas;
  sc.jobs = cfg.jobs;
  const verify::Rows rows = verify::run_suite(sc, ctx);
  print_rows(rows, out);
  const auto meta = run_meta(cfg, env);
  if (!cfg.out.empty()) {
    const bool as_json =
        cfg.format == "json" || (cfg.format.empty() && std::filesystem::path(cfg.out).extension() == ".json");
    if (as_json) {
      verify::write_atomic(cfg.out, verify::to_json(rows, meta));
    } else {
      verify::write_atomic(cfg.out, verify::to_csv(rows));
      const auto mirror = std::filesystem::path(cfg.out).replace_extension(".json");
      verify::write_atomic(mirror.string(), verify::to_json(rows, meta));
    }
  }
  const bool all_pass = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
  out << rows.size() << " rows, " << (all_pass ? "all passed" : "some failed") << "\n";
  return all_pass ? kOk : kCheckFailed;
}

int cmd_calibrate(RunConfig cfg, bool samples_given, std::ostream& out) {
  if (!samples_given) cfg.samples = kVerifySamples;
  const McConfig mc = mc_of(cfg);
  if (cfg.out.empty()) config_error("calibrate needs --out");
  const verify::EnvelopeSet base = verify::EnvelopeSet::load(cfg.envelopes, false);
  verify::CheckContext ctx;
  ctx.envelopes = &base;
  ctx.mc = mc;
  ctx.net = cfg.net;
  ctx.seed = cfg.seed;
  verify::Rows all;
  const Vec dims = io::parse_vector(cfg.dims);
  std::vector<std::string> suites;
  std::stringstream names(cfg.suite);
  for (std::string s; std::getline(names, s, ',');) suites.push_back(canonical_suite(s));
  for (const auto& suite : suites) {
    for (Eigen::Index i = 0; i < dims.size(); ++i) {
      verify::SuiteConfig sc;
      sc.name = suite;
      sc.dim = static_cast<int>(dims[i]);
      sc.lambdas = cfg.lambdas;
      sc.jobs = cfg.jobs;
      verify::Rows rows = verify::run_suite(sc, ctx);
      print_rows(rows, out);
      for (auto& r : rows) all.push_back(std::move(r));
    }
  }
  const std::map<std::string, std::string> prov{{"generated_by", "clab calibrate"},
                                                {"suite", cfg.suite},
                                                {"dims", cfg.dims},
                                                {"seed", std::to_string(cfg.seed)},
                                                {"samples", std::to_string(cfg.samples)},
                                                {"rows", std::to_string(all.size())}};
  verify::write_atomic(cfg.out, verify::calibrate_envelopes(base, all, prov));
  out << "wrote " << cfg.out << "\n";
  return kOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  if (cfg.files.empty()) config_error("report needs at least one CSV file");
  // (check, measure, p) -> dim -> constants
  std::map<std::tuple<std::string, std::string, std::string>, std::map<int, std::vector<std::string>>> trend;
  std::set<int> dims;
  std::size_t failed = 0;
  for (const auto& f : cfg.files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) config_error("cannot read " + f);
    std::stringstream ss;
    ss << in.rdbuf();
    for (auto& row : verify::parse_csv_report(ss.str())) {
      const int dim = std::stoi(row.fields["dim"]);
      dims.insert(dim);
      trend[{row.fields["check"], row.fields["measure"], row.fields["p"]}][dim].push_back(
          row.fields["constant"]);
      if (row.fields["pass"] != "true") ++failed;
    }
  }
  std::ostringstream os;
  const bool csv = cfg.format == "csv";
  os << (csv ? "check,measure,p" : "check\tmeasure\tp");
  for (int d : dims) os << (csv ? "," : "\t") << "n=" << d;
  os << "\n";
  for (const auto& [key, by_dim] : trend) {
    os << std::get<0>(key) << (csv ? "," : "\t") << std::get<1>(key) << (csv ? "," : "\t")
       << std::get<2>(key);
    for (int d : dims) {
      os << (csv ? "," : "\t");
      const auto it = by_dim.find(d);
      if (it == by_dim.end()) continue;
      for (std::size_t i = 0; i < it->second.size(); ++i) os << (i ? " " : "") << it->second[i];
    }
    os << "\n";
  }
  if (!csv) os << failed << " failing rows\n";
  emit(os.str(), cfg, out);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"clab: centroid bodies, log-Laplace transforms and verification suites"};
  app.require_subcommand(1);
  RunConfig cfg;

  CLI::Option* est_samples = nullptr;
  CLI::App* est = app.add_subcommand("estimate", "compute one quantity for a measure");
  est->add_option("quantity", cfg.quantity, "quantity to estimate")
      ->required()
      ->check(CLI::IsMember(kQuantities));
  est->add_option("--measure", cfg.measure, "measure JSON (file or inline)")->envname("CLAB_MEASURE");
  est->add_option("--p", cfg.p, "order p")->envname("CLAB_P");
  est->add_option("--q", cfg.q, "order q")->envname("CLAB_Q");
  est->add_option("--alpha", cfg.alpha, "psi_alpha exponent")->envname("CLAB_ALPHA");
  est->add_option("--xi", cfg.xi, "comma separated vector")->envname("CLAB_XI");
  est->add_option("--c-sharp", cfg.c_sharp, "q# constant")->envname("CLAB_C_SHARP");
  est->add_option("--mode", cfg.mode, "auto or mc")->envname("CLAB_MODE");
  add_common(est, cfg, &est_samples);

  CLI::Option* ver_samples = nullptr;
  CLI::App* ver = app.add_subcommand("verify", "run a verification suite");
  ver->add_option("--suite", cfg.suite, "core, tilts, projections, construction, main-theorems or all")
      ->envname("CLAB_SUITE");
  ver->add_option("--dim", cfg.dim, "dimension")->envname("CLAB_DIM");
  ver->add_option("--lambda", cfg.lambdas, "product split for the construction suite")->envname("CLAB_LAMBDA");
  ver->add_option("--envelopes", cfg.envelopes, "envelope file")->envname("CLAB_ENVELOPES");
  add_common(ver, cfg, &ver_samples);

  CLI::Option* cal_samples = nullptr;
  CLI::App* cal = app.add_subcommand("calibrate", "regenerate the envelope file from a run");
  cal->add_option("--suite", cfg.suite, "suite or comma-separated suites")->envname("CLAB_SUITE");
  cal->add_option("--dims", cfg.dims, "comma separated dimensions")->envname("CLAB_DIMS");
  cal->add_option("--lambda", cfg.lambdas, "product split for the construction suite")->envname("CLAB_LAMBDA");
  cal->add_option("--envelopes", cfg.envelopes, "base envelope file")->envname("CLAB_ENVELOPES");
  add_common(cal, cfg, &cal_samples);

  CLI::Option* rep_samples = nullptr;
  CLI::App* rep = app.add_subcommand("report", "aggregate CSV reports into a trend table");
  rep->add_option("files", cfg.files, "CSV report files")->required();
  add_common(rep, cfg, &rep_samples);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? kOk : kConfigError;
  }
  try {
    if (*est) return cmd_estimate(cfg, out);
    if (*ver) return cmd_verify(cfg, ver_samples->count() > 0, out);
    if (*cal) return cmd_calibrate(cfg, cal_samples->count() > 0, out);
    if (*rep) return cmd_report(cfg, out);
  } catch (const Error& e) {
    err << "clab: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "clab: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace clab::cli
