#include <doctest.h>
#include <unistd.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "clab/verify.hpp"

using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::vector<const char*> argv{"clab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = clab::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("clab_cli_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("estimate prints JSON records") {
  SUBCASE("Gaussian log-Laplace transform") {
    const auto r = run({"estimate", "lambda", "--measure", R"({"type":"gaussian","dim":2})", "--xi",
                        "0.6,0.8"});
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["quantity"] == "lambda");
    CHECK(j["value"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(j["stderr"].get<double>() == 0.0);
  }
  SUBCASE("support of Z_2 of the Gaussian") {
    const auto r = run({"estimate", "zp-support", "--measure", R"({"type":"gaussian","dim":3})", "--p",
                        "2", "--xi", "0,0,1"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["value"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("interval transform") {
    const auto r = run({"estimate", "lambda", "--measure", R"({"type":"uniform_cube","dim":1,"halfwidth":1})",
                        "--xi", "1"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["value"].get<double>() ==
          doctest::Approx(std::log(std::sinh(1.0))).epsilon(1e-10));
  }
  SUBCASE("CSV output") {
    const auto r = run({"estimate", "lambda-p", "--measure", R"({"type":"gaussian","dim":2})", "--p", "2",
                        "--xi", "1,0", "--format", "csv"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("quantity,measure,value,stderr", 0) == 0);
    const std::string row = r.out.substr(r.out.find('\n') + 1);
    const auto after_measure = row.find("\",") + 2;
    CHECK(std::stod(row.substr(after_measure)) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("tilted measure spec") {
    const auto r = run({"estimate", "tilt-cov", "--measure",
                        R"({"type":"tilt","base":{"type":"gaussian","dim":2},"xi":[1,2]})", "--xi", "0,0"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["value"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("configuration errors exit with 2") {
  CHECK(run({"estimate", "lambda", "--xi", "1"}).code == 2);
  CHECK(run({"estimate", "lambda", "--measure", "{\"type\":\"nonsense\"}", "--xi", "1"}).code == 2);
  CHECK(run({"estimate", "lambda", "--measure", "{\"type\":\"gaussian\",\"dim\":2}", "--xi", "1"}).code == 2);
  CHECK(run({"estimate", "zp-vrad", "--measure", "{\"type\":\"gaussian\",\"dim\":2}"}).code == 2);
  CHECK(run({"estimate", "no-such-quantity"}).code == 2);
  CHECK(run({"verify", "--suite", "no-such-suite"}).code == 2);
  CHECK(run({"estimate", "lambda", "--measure", "/no/such/file.json", "--xi", "1"}).code == 2);
  CHECK(run({}).code == 2);
}

TEST_CASE("verify writes versioned reports") {
  TempDir tmp;
  const auto csv = tmp.path / "construction.csv";
  const auto r = run({"verify", "--suite", "construction", "--dim", "4", "--seed", "7", "--out", csv.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("PASS construction_T") != std::string::npos);
  const std::string text = slurp(csv);
  CHECK(text.rfind("# clab-report v1\n", 0) == 0);
  const auto rows = clab::verify::parse_csv_report(text);
  REQUIRE(rows.size() == 6);
  for (const auto& row : rows) CHECK(row.fields.at("pass") == "true");

  const json mirror = json::parse(slurp(tmp.path / "construction.json"));
  CHECK(mirror["schema"] == clab::verify::kReportSchema);
  CHECK(mirror["rows"].size() == 6);

  SUBCASE("old suite names still work") {
    CHECK(run({"verify", "--suite", "section6", "--dim", "4", "--lambda", "0.5", "--samples", "4096"}).code == 0);
  }
  SUBCASE("report aggregates by dimension") {
    const auto rep = run({"report", csv.string(), "--format", "csv"});
    REQUIRE(rep.code == 0);
    CHECK(rep.out.rfind("check,measure,p,n=4\n", 0) == 0);
    CHECK(rep.out.find("construction_T,") != std::string::npos);
  }
  SUBCASE("schema mismatch is a configuration error") {
    const auto bad = tmp.path / "bad.csv";
    std::string wrong = text;
    wrong.replace(0, std::string("# clab-report v1").size(), "# clab-report v0");
    spit(bad, wrong);
    CHECK(run({"report", bad.string()}).code == 2);
    spit(bad, "# clab-report v1\ncheck,measure\nx,y\n");
    CHECK(run({"report", bad.string()}).code == 2);
  }
}

TEST_CASE("envelope files are checked") {
  TempDir tmp;
  json doc = json::parse(slurp(CLAB_DEFAULT_ENVELOPES));
  const std::vector<std::string> args{"verify", "--suite", "construction", "--dim", "4", "--lambda", "0.5",
                                      "--samples", "4096", "--envelopes"};
  auto with = [&](const std::string& file) {
    auto a = args;
    a.push_back(file);
    return run(a);
  };

  SUBCASE("missing or stale hash") {
    const auto f = (tmp.path / "nohash.json").string();
    json d = doc;
    d["provenance"].erase("hash");
    spit(f, d.dump());
    CHECK(with(f).code == 2);
    d = doc;
    d["checks"]["construction_T"]["bounds"]["default"] = json::array({nullptr, 100});
    spit(f, d.dump());
    CHECK(with(f).code == 2);
  }
  SUBCASE("a failing check exits with 1") {
    const auto f = (tmp.path / "tight.json").string();
    json d = doc;
    d["checks"]["construction_T"]["bounds"]["default"] = json::array({nullptr, 0.5});
    d["provenance"]["hash"] = "fnv1a64:" + clab::verify::fnv1a_hex(d["checks"].dump());
    spit(f, d.dump());
    const auto r = with(f);
    CHECK(r.code == 1);
    CHECK(r.out.find("FAIL construction_T ") != std::string::npos);
  }
}

TEST_CASE("calibrate regenerates a loadable envelope file") {
  TempDir tmp;
  const auto out = (tmp.path / "env.json").string();
  const auto r = run({"calibrate", "--suite", "construction", "--dims", "4", "--samples", "4096", "--out", out,
                      "--envelopes", CLAB_DEFAULT_ENVELOPES});
  REQUIRE(r.code == 0);
  const auto env = clab::verify::EnvelopeSet::load(out);
  CHECK(env.hash().rfind("fnv1a64:", 0) == 0);
  CHECK(env.get("construction_T", "anything").hi == 20.0);
}
