#include "clab/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clab/error.hpp"
#include "clab/loglaplace.hpp"

namespace clab::io {

using json = nlohmann::json;
using measures::MeasureSpec;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) bad(std::string("measure spec is missing \"") + key + "\"");
  return j[key];
}

int dim_of(const json& j) {
  const json& d = field(j, "dim");
  if (!d.is_number_integer() || d.get<int>() < 1) bad("\"dim\" must be a positive integer");
  return d.get<int>();
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) bad(std::string("\"") + key + "\" must be a number");
  return j[key].get<double>();
}

Vec vector_of(const json& j, const char* what) {
  if (!j.is_array()) bad(std::string(what) + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(std::string(what) + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Mat matrix_of(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) bad(std::string(what) + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Vec first = vector_of(j[0], what);
  Mat m(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = vector_of(j[static_cast<std::size_t>(r)], what);
    if (row.size() != m.cols()) bad(std::string(what) + " rows have different lengths");
    m.row(r) = row.transpose();
  }
  return m;
}

std::string resolve(const std::string& file, const std::string& base_dir) {
  const fs::path p(file);
  return p.is_absolute() ? file : (fs::path(base_dir) / p).string();
}

MeasureSpec build(const json& j, const std::string& base_dir) {
  if (!j.is_object()) bad("measure spec must be a JSON object");
  const json& t = field(j, "type");
  if (!t.is_string()) bad("\"type\" must be a string");
  const std::string type = t.get<std::string>();
  if (type == "gaussian") {
    if (j.contains("covariance")) return MeasureSpec::gaussian(matrix_of(j["covariance"], "covariance"));
    return MeasureSpec::gaussian(dim_of(j));
  }
  if (type == "uniform_cube") return MeasureSpec::uniform_cube(dim_of(j), number(j, "halfwidth", 1.0));
  if (type == "uniform_ball") return MeasureSpec::uniform_ball(dim_of(j), number(j, "radius", 1.0));
  if (type == "uniform_simplex") return MeasureSpec::uniform_simplex(dim_of(j));
  if (type == "uniform_polytope") {
    if (j.contains("vertices")) return MeasureSpec::uniform_polytope(matrix_of(j["vertices"], "vertices").transpose());
    const json& f = field(j, "vertices_file");
    if (!f.is_string()) bad("\"vertices_file\" must be a string");
    return MeasureSpec::uniform_polytope(read_points_csv(resolve(f.get<std::string>(), base_dir)));
  }
  if (type == "product") {
    const json& parts = field(j, "parts");
    if (!parts.is_array() || parts.empty()) bad("\"parts\" must be a non-empty array");
    std::vector<MeasureSpec> specs;
    for (const auto& p : parts) specs.push_back(build(p, base_dir));
    return MeasureSpec::product(std::move(specs));
  }
  if (type == "affine") {
    const MeasureSpec base = build(field(j, "base"), base_dir);
    const Mat a = j.contains("matrix") ? matrix_of(j["matrix"], "matrix")
                                       : Mat(Mat::Identity(base.dim(), base.dim()));
    const Vec b = j.contains("shift") ? vector_of(j["shift"], "shift") : Vec(Vec::Zero(a.rows()));
    return MeasureSpec::affine(base, a, b);
  }
  if (type == "tilt") {
    const MeasureSpec base = build(field(j, "base"), base_dir);
    return loglaplace::tilt(base, vector_of(field(j, "xi"), "xi"));
  }
  if (type == "projection") {
    const MeasureSpec base = build(field(j, "base"), base_dir);
    return measures::project(base, make_subspace(matrix_of(field(j, "basis"), "basis")));
  }
  if (type == "empirical") {
    Mat pts;
    if (j.contains("points")) {
      pts = matrix_of(j["points"], "points").transpose();
    } else {
      const json& f = field(j, "points_file");
      if (!f.is_string()) bad("\"points_file\" must be a string");
      pts = read_points_csv(resolve(f.get<std::string>(), base_dir));
    }
    if (j.contains("weights")) return MeasureSpec::empirical(pts, vector_of(j["weights"], "weights"));
    return MeasureSpec::empirical(pts);
  }
  bad("unknown measure type \"" + type + "\"");
}

}  // namespace

MeasureSpec parse_measure(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    bad(std::string("measure spec is not valid JSON: ") + e.what());
  }
  try {
    return build(j, base_dir);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    bad(e.what());
  }
}

MeasureSpec load_measure(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && arg[first] == '{') return parse_measure(arg, ".");
  std::ifstream in(arg, std::ios::binary);
  if (!in) bad("cannot read measure file " + arg);
  std::stringstream ss;
  ss << in.rdbuf();
  const fs::path dir = fs::path(arg).parent_path();
  return parse_measure(ss.str(), dir.empty() ? "." : dir.string());
}

Mat read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot read points file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& c : line) {
      if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        bad("bad number '" + tok + "' in " + path);
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) bad("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) bad("no points in " + path);
  Mat m(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (std::size_t r = 0; r < rows[c].size(); ++r)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[c][r];
  return m;
}

Vec parse_vector(const std::string& text) {
  std::vector<double> xs;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto a = tok.find_first_not_of(" \t");
    const auto b = tok.find_last_not_of(" \t");
    if (a == std::string::npos) bad("empty entry in vector '" + text + "'");
    tok = tok.substr(a, b - a + 1);
    try {
      std::size_t pos = 0;
      xs.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      bad("bad number '" + tok + "' in vector '" + text + "'");
    }
  }
  if (xs.empty()) bad("empty vector");
  return Eigen::Map<Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace clab::io
