#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "toml.hpp"

#include "bregctl/families.hpp"
#include "bregctl/synthesis.hpp"

namespace bregctl {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Field access with path diagnostics

namespace io {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Rejects keys outside `allowed`.
inline void require_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(join(path, it.key()) + ": unknown key");
  }
}

inline const Json& field(const Json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(join(path, key) + ": missing required field");
  return obj.at(key);
}

inline double number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

inline double number_or(const Json& obj, const std::string& path, const char* key, double fallback) {
  return obj.contains(key) ? number(obj.at(key), join(path, key)) : fallback;
}

inline std::string string_field(const Json& obj, const std::string& path, const char* key) {
  const Json& v = field(obj, path, key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v.get<std::string>();
}

/// A matrix as a list of rows; a bare number is a 1×1 matrix.
inline Matrix matrix(const Json& v, const std::string& path) {
  if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a non-empty list of rows");
  const auto rows = v.size();
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].empty()) throw ConfigError(rp + ": expected a non-empty row");
    if (i == 0) cols = v[i].size();
    if (v[i].size() != cols)
      throw ConfigError(rp + ": row has " + std::to_string(v[i].size()) + " entries, expected " + std::to_string(cols));
  }
  Matrix M(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      M(i, j) = number(v[i][j], path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  return M;
}

inline Vector vector(const Json& v, const std::string& path) {
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a non-empty list of numbers");
  Vector x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) x(i) = number(v[i], path + "[" + std::to_string(i) + "]");
  return x;
}

inline Json to_json(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vector& x) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) out.push_back(x(i));
  return out;
}

/// Parses a JSON document, reporting syntax errors with line and column.
inline Json parse_document(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    if (auto at = msg.find("column"); at != std::string::npos && msg.find(": ", at) != std::string::npos)
      msg = msg.substr(msg.find(": ", at) + 2);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }
}

inline Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json out = Json::object();
    for (const auto& [key, value] : *t) out[std::string(key.str())] = toml_to_json(value);
    return out;
  }
  if (const auto* a = node.as_array()) {
    Json out = Json::array();
    for (const auto& value : *a) out.push_back(toml_to_json(value));
    return out;
  }
  if (const auto* v = node.as_integer()) {
    if (v->get() >= 0) return static_cast<std::uint64_t>(v->get());
    return v->get();
  }
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  std::ostringstream os;
  node.visit([&](const auto& leaf) { os << leaf; });
  return os.str();
}

/// Parses a TOML document into the same tree a JSON config produces.
inline Json parse_toml_document(const std::string& text, const std::string& source) {
  try {
    return toml_to_json(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.source().begin.line) + ":" +
                      std::to_string(e.source().begin.column) + ": " + std::string(e.description()));
  }
}

/// JSON or TOML, chosen by extension.
inline Json read_document(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") return parse_toml_document(ss.str(), path);
  return parse_document(ss.str(), path);
}

}  // namespace io

// ---------------------------------------------------------------------------
// Noise, grid, tolerances

inline NoiseModel noise_from_json(const Json& j, const std::string& path, int n) {
  io::require_keys(j, path, {"family", "covariance"});
  const NoiseFamily fam = noise_family_from_string(io::string_field(j, path, "family"));
  if (fam == NoiseFamily::DegenerateZero && !j.contains("covariance")) return NoiseModel::zero(n);
  Matrix W = io::matrix(io::field(j, path, "covariance"), io::join(path, "covariance"));
  if (W.rows() != n || W.cols() != n)
    throw ConfigError(io::join(path, "covariance") + ": expected " + std::to_string(n) + "x" + std::to_string(n));
  return {fam, W};
}

inline Json to_json(const NoiseModel& noise) {
  return Json{{"family", to_string(noise.family())}, {"covariance", io::to_json(noise.covariance())}};
}

inline Json to_json(const GridSpec& g) {
  return Json{{"points_per_axis", g.points_per_axis}, {"scale", g.scale},           {"decades_below", g.decades_below},
              {"decades_above", g.decades_above},     {"directions", g.directions}, {"radii", g.radii},
              {"seed", g.seed}};
}

inline GridSpec grid_from_json(const Json& j, const std::string& path, GridSpec g = {}) {
  io::require_keys(j, path, {"points_per_axis", "scale", "decades_below", "decades_above", "directions", "radii", "seed"});
  auto integer = [&](const char* key, int& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 1)
      throw ConfigError(io::join(path, key) + ": expected a positive integer");
    out = j.at(key).get<int>();
  };
  integer("points_per_axis", g.points_per_axis);
  integer("directions", g.directions);
  integer("radii", g.radii);
  g.scale = io::number_or(j, path, "scale", g.scale);
  g.decades_below = io::number_or(j, path, "decades_below", g.decades_below);
  g.decades_above = io::number_or(j, path, "decades_above", g.decades_above);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError(io::join(path, "seed") + ": expected a nonnegative integer");
    g.seed = j.at("seed").get<std::uint64_t>();
  }
  if (!(g.scale > 0.0)) throw ConfigError(io::join(path, "scale") + ": must be positive");
  return g;
}

inline Json to_json(const Tolerances& t) {
  return Json{{"riccati", t.riccati}, {"kkt", t.kkt}, {"bellman", t.bellman}, {"margin_floor", t.margin_floor}};
}

inline Tolerances tolerances_from_json(const Json& j, const std::string& path) {
  io::require_keys(j, path, {"riccati", "kkt", "bellman", "margin_floor"});
  Tolerances t;
  t.riccati = io::number_or(j, path, "riccati", t.riccati);
  t.kkt = io::number_or(j, path, "kkt", t.kkt);
  t.bellman = io::number_or(j, path, "bellman", t.bellman);
  t.margin_floor = io::number_or(j, path, "margin_floor", t.margin_floor);
  return t;
}

// ---------------------------------------------------------------------------
// Cost specifications

/// A registered cost by name: quadratic {weight}, elasticnet {eps},
/// bangbang {t}, exponential {}.
struct CostSpec {
  std::string name;
  Json params = Json::object();
};

inline FunctionPtr make_cost(const CostSpec& spec, int dim, const std::string& path = "cost") {
  const Json& p = spec.params;
  if (spec.name == "quadratic") {
    io::require_keys(p, path, {"weight"});
    Matrix W = io::matrix(io::field(p, path, "weight"), io::join(path, "weight"));
    if (W.rows() == 1 && W.cols() == 1 && dim > 1) W = W(0, 0) * Matrix::Identity(dim, dim);
    if (W.rows() != dim || W.cols() != dim)
      throw ConfigError(io::join(path, "weight") + ": expected " + std::to_string(dim) + "x" + std::to_string(dim));
    if (min_eigenvalue(W) <= 0.0) throw ConfigError(io::join(path, "weight") + ": must be positive definite");
    return std::make_shared<Quadratic>(W);
  }
  if (spec.name == "elasticnet") {
    io::require_keys(p, path, {"eps"});
    return std::make_shared<ElasticNet>(dim, io::number(io::field(p, path, "eps"), io::join(path, "eps")));
  }
  if (spec.name == "bangbang") {
    io::require_keys(p, path, {"t"});
    if (dim != 1) throw ConfigError(path + ": bangbang cost is scalar");
    return std::make_shared<BangBangCost>(io::number(io::field(p, path, "t"), io::join(path, "t")));
  }
  if (spec.name == "exponential") {
    io::require_keys(p, path, {});
    if (dim != 1) throw ConfigError(path + ": exponential cost is scalar");
    return std::make_shared<ExponentialCost>();
  }
  throw ConfigError(path + ": unknown cost '" + spec.name + "' (expected quadratic, elasticnet, bangbang, exponential)");
}

inline CostSpec cost_spec_from_json(const Json& j, const std::string& path) {
  io::require_keys(j, path, {"name", "params"});
  CostSpec spec{io::string_field(j, path, "name"), j.contains("params") ? j.at("params") : Json::object()};
  if (!spec.params.is_object()) throw ConfigError(io::join(path, "params") + ": expected an object");
  return spec;
}

inline Json to_json(const CostSpec& c) { return Json{{"name", c.name}, {"params", c.params}}; }

inline ScalarFamilyParams family_params_from_json(const Json& j, const std::string& path, const LinearSystem& sys,
                                                  const std::string& family) {
  if (!sys.is_scalar()) throw ConfigError(path + ": closed-form families need a scalar system");
  ScalarFamilyParams p;
  p.a = sys.A()(0, 0);
  p.b = sys.B()(0, 0);
  if (family == "bangbang") {
    io::require_keys(j, path, {"m", "t"});
    p.t = io::number(io::field(j, path, "t"), io::join(path, "t"));
  } else if (family == "elasticnet") {
    io::require_keys(j, path, {"m", "eps"});
    p.eps = io::number(io::field(j, path, "eps"), io::join(path, "eps"));
  } else if (family == "exponential") {
    io::require_keys(j, path, {"m"});
  } else {
    throw ConfigError(path + ": unknown family '" + family + "' (expected bangbang, exponential, elasticnet)");
  }
  p.m = io::number_or(j, path, "m", 0.0);
  return p;
}

/// The fixed cost a family's design starts from, without its m.
inline FunctionPtr family_fixed_cost(const std::string& family, const ScalarFamilyParams& p) {
  if (family == "bangbang") return std::make_shared<BangBangCost>(p.t);
  if (family == "elasticnet") return std::make_shared<ElasticNet>(1, p.eps);
  if (family == "exponential") return std::make_shared<ExponentialCost>();
  throw ConfigError("unknown family '" + family + "'");
}

inline DesignMode family_mode(const std::string& family) {
  return family == "elasticnet" ? DesignMode::StateCostFirst : DesignMode::ControlCostFirst;
}

// ---------------------------------------------------------------------------
// Certificates

/// Everything needed to rebuild a certificate: M is stored separately from
/// the data defining (q, r), so editing M alone is detectable.
struct CertificateRecord {
  SynthesisCertificate cert;
  std::optional<CostSpec> fixed_cost;  // custom designs
  Matrix derived_at;                   // M at which the companion cost was derived
  double riccati_residual = 0.0;
};

inline Json to_json(const CertificateRecord& rec) {
  const SynthesisCertificate& c = rec.cert;
  Json margins = Json::array();
  for (const auto& m : c.feasibility.margins) margins.push_back(Json{{"condition", m.condition}, {"margin", m.value}});
  Json params = Json::object();
  for (const auto& [k, v] : c.params) params[k] = v;
  Json j{{"A", io::to_json(c.system.A())},
         {"B", io::to_json(c.system.B())},
         {"noise", to_json(c.system.noise())},
         {"M", io::to_json(c.M)},
         {"mode", to_string(c.mode)},
         {"family", c.family},
         {"params", params},
         {"feasible", c.feasibility.feasible},
         {"route", c.feasibility.route},
         {"margins", margins},
         {"riccati_residual", rec.riccati_residual},
         {"grid_spec", to_json(c.grid)},
         {"tolerances", to_json(c.tolerances)}};
  if (c.feasibility.numeric_convexity_verdict) j["numeric_convexity_verdict"] = *c.feasibility.numeric_convexity_verdict;
  if (rec.fixed_cost) {
    j["fixed_cost"] = to_json(*rec.fixed_cost);
    j["derived_at"] = io::to_json(rec.derived_at);
  }
  return j;
}

/// Rebuilds the certificate. q, r and p come from the family parameters or
/// from the fixed cost re-derived at `derived_at`; M is taken as stored.
inline CertificateRecord certificate_from_json(const Json& j, const std::string& path = "certificate") {
  io::require_keys(j, path,
                   {"A", "B", "noise", "M", "mode", "family", "params", "feasible", "route", "margins",
                    "riccati_residual", "grid_spec", "tolerances", "numeric_convexity_verdict", "fixed_cost",
                    "derived_at"});
  const Matrix A = io::matrix(io::field(j, path, "A"), io::join(path, "A"));
  const Matrix B = io::matrix(io::field(j, path, "B"), io::join(path, "B"));
  const NoiseModel noise = j.contains("noise") ? noise_from_json(j.at("noise"), io::join(path, "noise"), A.rows())
                                               : NoiseModel::zero(static_cast<int>(A.rows()));
  LinearSystem sys(A, B, noise);
  const Matrix M = io::matrix(io::field(j, path, "M"), io::join(path, "M"));
  if (M.rows() != sys.n() || M.cols() != sys.n()) throw ConfigError(io::join(path, "M") + ": dimension mismatch");
  const DesignMode mode = design_mode_from_string(io::string_field(j, path, "mode"));
  const std::string family = io::string_field(j, path, "family");
  const GridSpec grid = j.contains("grid_spec") ? grid_from_json(j.at("grid_spec"), io::join(path, "grid_spec")) : GridSpec{};
  const Tolerances tol = j.contains("tolerances") ? tolerances_from_json(j.at("tolerances"), io::join(path, "tolerances"))
                                                  : Tolerances{};
  std::map<std::string, double> params;
  if (j.contains("params")) {
    const Json& pj = j.at("params");
    if (!pj.is_object()) throw ConfigError(io::join(path, "params") + ": expected an object");
    for (auto it = pj.begin(); it != pj.end(); ++it) params[it.key()] = io::number(it.value(), io::join(path, "params." + it.key()));
  }

  CertificateRecord rec;
  if (family != "custom") {
    ScalarFamilyParams p;
    if (!sys.is_scalar()) throw ConfigError(path + ": closed-form families need a scalar system");
    p.a = sys.A()(0, 0);
    p.b = sys.B()(0, 0);
    auto get = [&](const char* k) {
      auto it = params.find(k);
      if (it == params.end()) throw ConfigError(io::join(path, std::string("params.") + k) + ": missing");
      return it->second;
    };
    p.m = get("m");
    if (family == "bangbang") p.t = get("t");
    if (family == "elasticnet") p.eps = get("eps");
    ClosedFormFamily f = make_family(family, p);
    rec.cert = family_certificate(f, noise);
    rec.cert.grid = grid;
    rec.derived_at = Matrix::Constant(1, 1, p.m);
  } else {
    CostSpec spec = cost_spec_from_json(io::field(j, path, "fixed_cost"), io::join(path, "fixed_cost"));
    const Matrix at = io::matrix(io::field(j, path, "derived_at"), io::join(path, "derived_at"));
    FunctionPtr fixed = make_cost(spec, mode == DesignMode::StateCostFirst ? sys.n() : sys.m(), io::join(path, "fixed_cost"));
    rec.cert = certify(sys, fixed, mode, at, grid, tol);
    rec.fixed_cost = spec;
    rec.derived_at = at;
  }
  rec.cert.M = M;
  rec.cert.mode = mode;
  rec.cert.family = family;
  rec.cert.params = params;
  rec.cert.tolerances = tol;
  if (j.contains("riccati_residual")) rec.riccati_residual = io::number(j.at("riccati_residual"), io::join(path, "riccati_residual"));
  if (j.contains("margins")) {
    // Reported values are kept verbatim so that a round trip is exact.
    rec.cert.feasibility.margins.clear();
    for (const Json& m : j.at("margins"))
      rec.cert.feasibility.margins.push_back({m.at("condition").get<std::string>(), m.at("margin").get<double>()});
  }
  if (j.contains("feasible")) rec.cert.feasibility.feasible = j.at("feasible").get<bool>();
  if (j.contains("route")) rec.cert.feasibility.route = j.at("route").get<std::string>();
  if (j.contains("numeric_convexity_verdict"))
    rec.cert.feasibility.numeric_convexity_verdict = j.at("numeric_convexity_verdict").get<bool>();
  return rec;
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot write file");
  out << j.dump(2) << '\n';
}

}  // namespace bregctl
