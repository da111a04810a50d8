#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lrsng/errors.hpp"
#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"
#include "lrsng/report.hpp"
#include "lrsng/riccati.hpp"

namespace lrsng::io {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& spec_keys() {
  static const std::vector<std::string> keys = {
      "n",  "m1", "m2", "N",  "p",  "mu", "A",       "BL",      "BR",      "QL",
      "QR", "SL", "SR", "ML", "MR", "PL_term", "PR_term", "Sigma_x0", "Sigma_w"};
  return keys;
}

// Shortest decimal text that reads back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace detail {

struct TextPosition {
  std::size_t line = 1;
  std::size_t column = 1;
};

inline TextPosition position_of(const std::string& text, std::size_t byte) {
  TextPosition pos;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++pos.line;
      pos.column = 1;
    } else {
      ++pos.column;
    }
  }
  return pos;
}

// Line of the first `"key" :` occurrence, or 0 if absent.
inline std::size_t key_line(const std::string& text, const std::string& key) {
  const std::string quoted = "\"" + key + "\"";
  std::size_t from = 0;
  while (true) {
    const auto at = text.find(quoted, from);
    if (at == std::string::npos) return 0;
    auto j = at + quoted.size();
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j < text.size() && text[j] == ':') return position_of(text, at).line;
    from = at + 1;
  }
}

inline std::string where(const std::string& text, const std::string& key) {
  const auto line = key_line(text, key);
  return line ? "line " + std::to_string(line) + ": " : std::string();
}

inline double real_field(const Json& v, const std::string& name) {
  if (!v.is_number()) throw ParseError("field '" + name + "' must be a number");
  return v.get<double>();
}

inline int int_field(const Json& v, const std::string& name) {
  if (!v.is_number_integer())
    throw ParseError("field '" + name + "' must be an integer");
  const auto x = v.get<long long>();
  if (x < -1'000'000 || x > 1'000'000)
    throw ParseError("field '" + name + "' out of range");
  return static_cast<int>(x);
}

inline Matrix matrix_field(const Json& v, const std::string& name) {
  if (!v.is_array()) throw ParseError("field '" + name + "' must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  for (const auto& row : v) {
    if (!row.is_array())
      throw ParseError("field '" + name + "' must be an array of rows");
    if (cols < 0) cols = static_cast<Eigen::Index>(row.size());
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError("field '" + name + "' has rows of unequal length");
  }
  Matrix m(rows, std::max<Eigen::Index>(cols, 0));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = real_field(v[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
                           name + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
  return m;
}

inline Vector vector_field(const Json& v, const std::string& name) {
  if (!v.is_array()) throw ParseError("field '" + name + "' must be an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = real_field(v[i], name + "[" + std::to_string(i) + "]");
  return out;
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Parses a config document without validating it. Errors carry the line and
// column (syntax) or the offending field name.
inline GameSpec parse_spec(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto pos = detail::position_of(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("parse error at line " + std::to_string(pos.line) + ", column " +
                     std::to_string(pos.column) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("config must be a JSON object");

  for (const auto& key : spec_keys())
    if (!doc.contains(key)) throw ParseError("missing field '" + key + "'");
  for (const auto& item : doc.items()) {
    const auto& keys = spec_keys();
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
      throw ParseError(detail::where(text, item.key()) + "unknown field '" +
                       item.key() + "'");
  }

  GameSpec s;
  try {
    s.n = detail::int_field(doc["n"], "n");
    s.m1 = detail::int_field(doc["m1"], "m1");
    s.m2 = detail::int_field(doc["m2"], "m2");
    s.N = detail::int_field(doc["N"], "N");
    s.p = detail::real_field(doc["p"], "p");
    s.mu = detail::vector_field(doc["mu"], "mu");
    const std::pair<const char*, Matrix*> matrices[] = {
        {"A", &s.A},   {"BL", &s.BL}, {"BR", &s.BR},           {"QL", &s.QL},
        {"QR", &s.QR}, {"SL", &s.SL}, {"SR", &s.SR},           {"ML", &s.ML},
        {"MR", &s.MR}, {"PL_term", &s.PL_term}, {"PR_term", &s.PR_term},
        {"Sigma_x0", &s.Sigma_x0}, {"Sigma_w", &s.Sigma_w}};
    for (const auto& [name, dst] : matrices) *dst = detail::matrix_field(doc[name], name);
  } catch (const ParseError& e) {
    // Anchor the message on the field's line when it names one.
    const std::string msg = e.what();
    const auto open = msg.find('\'');
    const auto close = msg.find_first_of("'[", open + 1);
    if (open != std::string::npos && close != std::string::npos)
      throw ParseError(detail::where(text, msg.substr(open + 1, close - open - 1)) + msg);
    throw;
  }
  return s;
}

// Parses, symmetrizes within tolerance, and validates. A validation failure
// lists every violation, each prefixed by the line of the field it names.
inline GameSpec load_spec_text(const std::string& text, const Tolerances& tol = {}) {
  GameSpec s = parse_spec(text);
  symmetrize_inputs(s);
  const auto report = validate(s, tol);
  if (!report.ok()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& v : report.violations) {
      const auto field = v.substr(0, v.find(' '));
      os << "\n  " << detail::where(text, field) << v;
    }
    throw ValidationError(os.str());
  }
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline GameSpec load_spec(const std::filesystem::path& path, const Tolerances& tol = {}) {
  const std::string text = read_file(path);
  try {
    return load_spec_text(text, tol);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string dump_spec(const GameSpec& s) {
  Json doc;
  doc["n"] = s.n;
  doc["m1"] = s.m1;
  doc["m2"] = s.m2;
  doc["N"] = s.N;
  doc["p"] = s.p;
  Json mu = Json::array();
  for (Eigen::Index i = 0; i < s.mu.size(); ++i) mu.push_back(s.mu(i));
  doc["mu"] = std::move(mu);
  doc["A"] = detail::matrix_json(s.A);
  doc["BL"] = detail::matrix_json(s.BL);
  doc["BR"] = detail::matrix_json(s.BR);
  doc["QL"] = detail::matrix_json(s.QL);
  doc["QR"] = detail::matrix_json(s.QR);
  doc["SL"] = detail::matrix_json(s.SL);
  doc["SR"] = detail::matrix_json(s.SR);
  doc["ML"] = detail::matrix_json(s.ML);
  doc["MR"] = detail::matrix_json(s.MR);
  doc["PL_term"] = detail::matrix_json(s.PL_term);
  doc["PR_term"] = detail::matrix_json(s.PR_term);
  doc["Sigma_x0"] = detail::matrix_json(s.Sigma_x0);
  doc["Sigma_w"] = detail::matrix_json(s.Sigma_w);
  return doc.dump(2) + "\n";
}

// Long-format gains: k,matrix,row,col,value sorted by (k, matrix, row, col).
inline std::string gains_csv(const RiccatiSolution& sol) {
  std::string out = "k,matrix,row,col,value\n";
  for (std::size_t k = 0; k < sol.KL.size(); ++k) {
    const std::pair<const char*, const Matrix*> gains[] = {{"KL", &sol.KL[k]},
                                                           {"KR", &sol.KR[k]}};
    for (const auto& [name, g] : gains)
      for (Eigen::Index r = 0; r < g->rows(); ++r)
        for (Eigen::Index c = 0; c < g->cols(); ++c)
          out += std::to_string(k) + "," + name + "," + std::to_string(r) + "," +
                 std::to_string(c) + "," + format_real((*g)(r, c)) + "\n";
  }
  return out;
}

inline std::string riccati_json(const RiccatiSolution& sol, const CostPair& costs,
                                double convergence_tol) {
  Json doc;
  doc["remote_gain"] = std::string(to_string(sol.form));
  doc["N"] = sol.horizon();
  doc["convergence"] = {{"tol", convergence_tol},
                        {"k_star", gain_convergence(sol, convergence_tol)}};
  doc["analytic"] = {{"jl", costs.jl}, {"jr", costs.jr}};
  Json stages = Json::array();
  for (std::size_t k = 0; k < sol.PL.size(); ++k) {
    Json st;
    st["k"] = k;
    st["PL"] = detail::matrix_json(sol.PL[k]);
    st["PR"] = detail::matrix_json(sol.PR[k]);
    st["OmegaL"] = detail::matrix_json(sol.OmegaL[k]);
    st["OmegaR"] = detail::matrix_json(sol.OmegaR[k]);
    if (k < sol.KL.size()) {
      st["KL"] = detail::matrix_json(sol.KL[k]);
      st["KR"] = detail::matrix_json(sol.KR[k]);
      st["GL"] = detail::matrix_json(sol.GL[k]);
      st["GR"] = detail::matrix_json(sol.GR[k]);
    }
    stages.push_back(std::move(st));
  }
  doc["stages"] = std::move(stages);
  return doc.dump(2) + "\n";
}

inline std::string report_json(const CostReport& r, const std::vector<CheckResult>& checks) {
  Json doc;
  doc["jl"] = r.jl;
  doc["jr"] = r.jr;
  doc["jl_se"] = r.jl_se;
  doc["jr_se"] = r.jr_se;
  doc["trajectories"] = r.trajectories;
  doc["seed"] = r.seed;
  Json list = Json::array();
  for (const auto& c : checks)
    list.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  doc["checks"] = std::move(list);
  return doc.dump(2) + "\n";
}

}  // namespace lrsng::io
