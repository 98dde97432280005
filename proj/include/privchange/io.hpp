// Copyright 2026 The privchange Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "privchange/common.hpp"
#include "privchange/detection.hpp"
#include "privchange/error.hpp"
#include "privchange/linear.hpp"
#include "privchange/mdp.hpp"
#include "privchange/metrics.hpp"
#include "privchange/synthesis.hpp"

namespace privchange::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Source positions
// ---------------------------------------------------------------------------

/// Maps JSON pointers ("/P0/1/2") to byte offsets in a syntactically valid
/// document so semantic errors can point at a line and column.
class SourceMap {
 public:
  explicit SourceMap(const std::string& text) : text_(text) {
    std::size_t pos = 0;
    skip_ws(pos);
    if (pos < text_.size()) value(pos, "");
  }

  std::string where(const std::string& pointer) const {
    auto it = offsets_.find(pointer);
    if (it == offsets_.end()) return "";
    return location(text_, it->second);
  }

  static std::string location(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
  }

 private:
  void skip_ws(std::size_t& pos) const {
    while (pos < text_.size() &&
           (text_[pos] == ' ' || text_[pos] == '\n' || text_[pos] == '\r' ||
            text_[pos] == '\t')) {
      ++pos;
    }
  }

  std::string string_at(std::size_t& pos) const {
    std::string out;
    ++pos;
    while (pos < text_.size() && text_[pos] != '"') {
      if (text_[pos] == '\\') ++pos;
      if (pos < text_.size()) out.push_back(text_[pos]);
      ++pos;
    }
    ++pos;
    return out;
  }

  void value(std::size_t& pos, const std::string& ptr) {
    offsets_[ptr] = pos;
    if (pos >= text_.size()) return;
    const char c = text_[pos];
    if (c == '{') {
      ++pos;
      skip_ws(pos);
      while (pos < text_.size() && text_[pos] != '}') {
        const std::string key = string_at(pos);
        skip_ws(pos);
        ++pos;  // ':'
        skip_ws(pos);
        value(pos, ptr + "/" + key);
        skip_ws(pos);
        if (pos < text_.size() && text_[pos] == ',') ++pos;
        skip_ws(pos);
      }
      ++pos;
    } else if (c == '[') {
      ++pos;
      skip_ws(pos);
      std::size_t idx = 0;
      while (pos < text_.size() && text_[pos] != ']') {
        value(pos, ptr + "/" + std::to_string(idx++));
        skip_ws(pos);
        if (pos < text_.size() && text_[pos] == ',') ++pos;
        skip_ws(pos);
      }
      ++pos;
    } else if (c == '"') {
      string_at(pos);
    } else {
      while (pos < text_.size() && text_[pos] != ',' && text_[pos] != ']' &&
             text_[pos] != '}' && text_[pos] != ' ' && text_[pos] != '\n' &&
             text_[pos] != '\r' && text_[pos] != '\t') {
        ++pos;
      }
    }
  }

  const std::string& text_;
  std::map<std::string, std::size_t> offsets_;
};

/// A parsed document plus the positions needed for diagnostics.
class Document {
 public:
  Document(std::string text, std::string origin)
      : text_(std::move(text)), origin_(std::move(origin)) {
    try {
      root_ = Json::parse(text_);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::kParseError,
           origin_ + ": " + SourceMap::location(text_, e.byte > 0 ? e.byte - 1 : 0) +
               ": malformed JSON (" + std::string(e.what()) + ")");
    }
    map_ = std::make_unique<SourceMap>(text_);
    if (!root_.is_object()) fail_at("", "top level must be an object");
  }

  const Json& root() const { return root_; }

  [[noreturn]] void fail_at(const std::string& ptr, const std::string& msg,
                            ErrorKind kind = ErrorKind::kParseError) const {
    std::string loc = map_ ? map_->where(ptr) : "";
    std::string field = ptr.empty() ? "document" : ptr;
    fail(kind, origin_ + ": " + (loc.empty() ? "" : loc + ": ") + field + ": " +
                   msg);
  }

  const Json& require(const std::string& key) const {
    if (!root_.contains(key)) fail_at("", "missing field \"" + key + "\"");
    return root_.at(key);
  }

  bool has(const std::string& key) const { return root_.contains(key); }

  double number(const Json& j, const std::string& ptr) const {
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "inf") return kInf;
      if (s == "-inf") return -kInf;
    }
    if (!j.is_number()) fail_at(ptr, "expected a number");
    return j.get<double>();
  }

  std::int64_t integer(const Json& j, const std::string& ptr) const {
    if (!j.is_number_integer()) fail_at(ptr, "expected an integer");
    return j.get<std::int64_t>();
  }

  Vector vector(const Json& j, const std::string& ptr,
                Index expected = -1) const {
    if (j.is_number()) {
      Vector v(1);
      v(0) = j.get<double>();
      if (expected >= 0 && expected != 1) {
        fail_at(ptr, "expected " + std::to_string(expected) + " entries");
      }
      return v;
    }
    if (!j.is_array()) fail_at(ptr, "expected an array of numbers");
    if (expected >= 0 && static_cast<Index>(j.size()) != expected) {
      fail_at(ptr, "expected " + std::to_string(expected) + " entries, found " +
                       std::to_string(j.size()));
    }
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      v(static_cast<Index>(i)) = number(j[i], ptr + "/" + std::to_string(i));
    }
    return v;
  }

  Matrix matrix(const Json& j, const std::string& ptr, Index rows = -1,
                Index cols = -1) const {
    if (!j.is_array() || j.empty()) fail_at(ptr, "expected an array of rows");
    if (rows >= 0 && static_cast<Index>(j.size()) != rows) {
      fail_at(ptr, "expected " + std::to_string(rows) + " rows, found " +
                       std::to_string(j.size()));
    }
    const std::string first = ptr + "/0";
    if (!j[0].is_array()) fail_at(first, "expected a row array");
    const Index c = cols >= 0 ? cols : static_cast<Index>(j[0].size());
    Matrix m(static_cast<Index>(j.size()), c);
    for (std::size_t r = 0; r < j.size(); ++r) {
      const std::string rp = ptr + "/" + std::to_string(r);
      if (!j[r].is_array()) fail_at(rp, "expected a row array");
      m.row(static_cast<Index>(r)) = vector(j[r], rp, c).transpose();
    }
    return m;
  }

 private:
  std::string text_;
  std::string origin_;
  Json root_;
  std::unique_ptr<SourceMap> map_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kParseError, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Rows must sum to one within this tolerance; accepted rows are rescaled.
inline constexpr double kParseStochasticTol = 1e-9;

namespace detail {

inline Matrix stochastic_rows(const Document& doc, const Matrix& m,
                              const std::string& ptr) {
  Matrix out = m;
  for (Index r = 0; r < m.rows(); ++r) {
    const std::string rp = ptr + "/" + std::to_string(r);
    for (Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        doc.fail_at(rp, "entries must be finite", ErrorKind::kNegativeEntry);
      }
      if (m(r, c) < 0.0) {
        doc.fail_at(rp + "/" + std::to_string(c), "negative probability",
                    ErrorKind::kNegativeEntry);
      }
    }
    const double s = m.row(r).sum();
    if (std::abs(s - 1.0) > kParseStochasticTol) {
      std::ostringstream os;
      os.precision(15);
      os << "row sums to " << s;
      doc.fail_at(rp, os.str(), ErrorKind::kNonStochasticRow);
    }
    out.row(r) /= s;
  }
  return out;
}

inline Mdp parse_model(const Document& doc, const char* p_key,
                       const char* r_key, int nx, int nu) {
  const std::string pp = std::string("/") + p_key;
  const Json& pj = doc.require(p_key);
  if (!pj.is_array() || static_cast<int>(pj.size()) != nu) {
    doc.fail_at(pp, "expected one matrix per action (" + std::to_string(nu) + ")");
  }
  Mdp m;
  for (int u = 0; u < nu; ++u) {
    const std::string up = pp + "/" + std::to_string(u);
    m.P.push_back(stochastic_rows(doc, doc.matrix(pj[u], up, nx, nx), up));
  }
  m.r = doc.matrix(doc.require(r_key), std::string("/") + r_key, nx, nu);
  if (!m.r.allFinite()) {
    doc.fail_at(std::string("/") + r_key, "rewards must be finite",
                ErrorKind::kInvalidArgument);
  }
  return m;
}

}  // namespace detail

/// {n_states, n_actions, P0: [action][row][col], P1, r0: [row][action], r1,
///  nu, optional pi0 / pi1: [row][action] (uniform when absent)}.
inline ChangeScenario parse_scenario(const std::string& text,
                                     const std::string& origin = "<scenario>") {
  const Document doc(text, origin);
  const std::int64_t nx = doc.integer(doc.require("n_states"), "/n_states");
  const std::int64_t nu = doc.integer(doc.require("n_actions"), "/n_actions");
  if (nx < 1) doc.fail_at("/n_states", "must be >= 1");
  if (nu < 1) doc.fail_at("/n_actions", "must be >= 1");
  ChangeScenario sc;
  sc.m0 = detail::parse_model(doc, "P0", "r0", static_cast<int>(nx),
                              static_cast<int>(nu));
  sc.m1 = detail::parse_model(doc, "P1", "r1", static_cast<int>(nx),
                              static_cast<int>(nu));
  for (const char* key : {"pi0", "pi1"}) {
    Policy p = Policy::uniform(static_cast<int>(nx), static_cast<int>(nu));
    if (doc.has(key)) {
      const std::string ptr = std::string("/") + key;
      p.pi = detail::stochastic_rows(doc, doc.matrix(doc.root().at(key), ptr, nx, nu),
                                     ptr);
    }
    (std::string(key) == "pi0" ? sc.pi0 : sc.pi1) = std::move(p);
  }
  sc.nu = doc.has("nu") ? doc.integer(doc.root().at("nu"), "/nu") : 1;
  if (sc.nu < 1) doc.fail_at("/nu", "change time must be >= 1");
  validate_scenario(sc);
  return sc;
}

inline ChangeScenario load_scenario(const std::string& path) {
  return parse_scenario(read_file(path), path);
}

/// {A, B, F, theta, Q, K, R (identity when absent), nu}.
inline LinearSystem parse_linear(const std::string& text,
                                 const std::string& origin = "<linear>") {
  const Document doc(text, origin);
  LinearSystem s;
  s.A = doc.matrix(doc.require("A"), "/A");
  const Index n = s.A.rows();
  if (s.A.cols() != n) doc.fail_at("/A", "must be square");
  s.B = doc.matrix(doc.require("B"), "/B", n);
  s.F = doc.matrix(doc.require("F"), "/F", n);
  s.theta = doc.vector(doc.require("theta"), "/theta", s.F.cols());
  s.Q = doc.matrix(doc.require("Q"), "/Q", n, n);
  s.K = doc.matrix(doc.require("K"), "/K", s.B.cols(), n);
  s.R = doc.has("R") ? doc.matrix(doc.root().at("R"), "/R", s.B.cols(), s.B.cols())
                     : Matrix::Identity(s.B.cols(), s.B.cols());
  s.nu = doc.has("nu") ? doc.integer(doc.root().at("nu"), "/nu") : 1;
  validate_linear(s);
  return s;
}

inline LinearSystem load_linear(const std::string& path) {
  return parse_linear(read_file(path), path);
}

/// Any subset of the SynthesisConfig fields; the rest keep their defaults.
inline SynthesisConfig parse_config(const std::string& text,
                                    const std::string& origin = "<config>") {
  const Document doc(text, origin);
  SynthesisConfig cfg;
  for (const auto& [key, val] : doc.root().items()) {
    const std::string ptr = "/" + key;
    if (key == "ccp_max_iters") {
      cfg.ccp_max_iters = static_cast<int>(doc.integer(val, ptr));
    } else if (key == "ccp_tol") {
      cfg.ccp_tol = doc.number(val, ptr);
    } else if (key == "inner_max_iters") {
      cfg.inner_max_iters = static_cast<int>(doc.integer(val, ptr));
    } else if (key == "inner_tol") {
      cfg.inner_tol = doc.number(val, ptr);
    } else if (key == "epsilon_floor") {
      cfg.epsilon_floor = doc.number(val, ptr);
    } else if (key == "restarts") {
      cfg.restarts = static_cast<int>(doc.integer(val, ptr));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(doc.integer(val, ptr));
    } else {
      doc.fail_at(ptr, "unknown configuration field");
    }
  }
  cfg.validate();
  return cfg;
}

inline SynthesisConfig load_config(const std::string& path) {
  return parse_config(read_file(path), path);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline Json number(double v) {
  if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
  if (std::isnan(v)) return Json("nan");
  return Json(v == 0.0 ? 0.0 : v);
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(number(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
  return out;
}

inline Json to_json(const PrivacyReport& rep) {
  Json j;
  j["i_f"] = number(rep.i_f);
  j["i_l"] = number(rep.i_l);
  j["i_l_lower"] = number(rep.i_l_lower);
  j["privacy_full"] = number(rep.privacy_full);
  j["privacy_limited"] = number(rep.privacy_limited);
  Json v = Json::array();
  for (const auto& cv : rep.ac_violations) {
    Json e;
    e["channel"] =
        cv.channel == ContinuityViolation::Channel::kFull ? "full" : "limited";
    e["state"] = cv.state;
    e["action"] = cv.action ? Json(*cv.action) : Json(nullptr);
    v.push_back(std::move(e));
  }
  j["ac_violations"] = std::move(v);
  return j;
}

inline Json to_json(const SynthesisConfig& cfg) {
  Json j;
  j["ccp_max_iters"] = cfg.ccp_max_iters;
  j["ccp_tol"] = cfg.ccp_tol;
  j["inner_max_iters"] = cfg.inner_max_iters;
  j["inner_tol"] = cfg.inner_tol;
  j["epsilon_floor"] = cfg.epsilon_floor;
  j["restarts"] = cfg.restarts;
  j["seed"] = cfg.seed;
  return j;
}

inline Json to_json(const SynthesisResult& res) {
  Json j;
  j["objective"] = number(res.objective);
  j["rate"] = number(res.rate);
  j["value"] = number(res.value);
  j["value0"] = number(res.value0);
  j["value1"] = number(res.value1);
  j["rho"] = res.rho;
  j["lambda"] = res.lambda;
  j["feasibility_residual"] = number(res.feasibility_residual);
  j["iterations"] = res.iterations;
  j["converged"] = res.converged;
  j["restart_index"] = res.restart_index;
  j["pi0"] = matrix_json(res.pi0.pi);
  j["pi1"] = matrix_json(res.pi1.pi);
  j["xi0"] = res.xi0.xi.size() ? matrix_json(res.xi0.xi) : Json(nullptr);
  j["xi1"] = res.xi1.xi.size() ? matrix_json(res.xi1.xi) : Json(nullptr);
  Json hist = Json::array();
  for (double h : res.history) hist.push_back(number(h));
  j["history"] = std::move(hist);
  return j;
}

inline Json to_json(const DelayReport& rep) {
  Json j;
  const bool delay = rep.kind == DelayReport::Kind::kDelay;
  j["kind"] = delay ? "delay" : "false_alarm";
  j["mode"] = to_string(rep.mode);
  j["threshold"] = rep.threshold;
  j[delay ? "mean_delay" : "mean_time_to_false_alarm"] = number(rep.mean);
  j["ci_halfwidth"] = number(rep.ci_halfwidth);
  j["runs"] = rep.runs;
  j["censored"] = rep.censored;
  j["horizon"] = rep.horizon;
  j["nu"] = delay ? Json(rep.nu) : Json("inf");
  return j;
}

inline Json to_json(const LinearTradeoffSolution& sol) {
  Json j;
  j["alpha0"] = vector_json(sol.alpha0);
  j["alpha1"] = vector_json(sol.alpha1);
  j["value"] = number(sol.value);
  j["rate"] = number(sol.rate);
  j["sigma"] = matrix_json(sol.sigma);
  return j;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// 12 significant digits, C locale, "inf" for infinities.
inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12) << v;
  return os.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(csv_number(v));
    row_strings(s);
  }

 private:
  std::ostream& out_;
};

}  // namespace privchange::io
