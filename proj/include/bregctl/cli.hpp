#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bregctl/bregman.hpp"
#include "bregctl/families.hpp"
#include "bregctl/io.hpp"
#include "bregctl/lqr.hpp"
#include "bregctl/simulation.hpp"
#include "bregctl/synthesis.hpp"

namespace bregctl {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInfeasible = 2, kExitVerifyFailed = 3 };

inline const std::vector<std::string>& all_properties() {
  static const std::vector<std::string> names{"bregman", "riccati", "kkt", "bellman", "lyapunov", "expectation"};
  return names;
}

struct RunConfig {
  std::string source;
  LinearSystem system{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};

  // cost
  std::string cost_mode;  // family | state-cost-first | control-cost-first
  std::string family;
  ScalarFamilyParams family_params;
  std::optional<CostSpec> custom;

  // synthesis
  std::optional<Objective> objective;
  std::optional<Matrix> M;
  std::optional<std::string> certificate_path;
  std::optional<GridSpec> grid;
  Tolerances tolerances;
  double m_lo = 1e-6;
  double m_hi = 1e3;

  // simulation
  std::optional<Vector> x0;
  int horizon = 300;
  std::vector<std::uint64_t> seeds{0};
  bool baseline = false;
  std::string controller = "printed";  // printed | derived
  std::optional<Matrix> baseline_Q;
  std::optional<Matrix> baseline_R;

  // output
  std::string out_dir;
  bool write_csv = true;
  bool write_json = true;

  // verify
  std::vector<std::string> properties = all_properties();
  int verify_samples = 200;

  bool is_family() const { return cost_mode == "family"; }
  bool has_inline_certificate() const {
    return certificate_path || M || (is_family() && family_params.m > 0.0);
  }
};

inline std::string default_out_dir() {
  if (const char* env = std::getenv("BREGCTL_OUT_DIR"); env && *env) return env;
  return "bregctl-out";
}

inline RunConfig parse_run_config(const Json& j, const std::string& source) {
  using namespace io;
  require_keys(j, "", {"system", "cost", "synthesis", "simulation", "output", "verify"});
  RunConfig cfg;
  cfg.source = source;

  const Json& sj = field(j, "", "system");
  require_keys(sj, "system", {"A", "B", "noise"});
  const Matrix A = matrix(field(sj, "system", "A"), "system.A");
  const Matrix B = matrix(field(sj, "system", "B"), "system.B");
  if (A.rows() != A.cols())
    throw ConfigError("system.A: must be square, got " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  if (B.rows() != A.rows())
    throw ConfigError("system.B: must have " + std::to_string(A.rows()) + " rows, got " + std::to_string(B.rows()));
  const int n = static_cast<int>(A.rows());
  NoiseModel noise = sj.contains("noise") ? noise_from_json(sj.at("noise"), "system.noise", n) : NoiseModel::zero(n);
  cfg.system = LinearSystem(A, B, noise);

  if (j.contains("cost")) {
    const Json& cj = j.at("cost");
    require_keys(cj, "cost", {"mode", "family", "custom"});
    cfg.cost_mode = string_field(cj, "cost", "mode");
    if (cfg.cost_mode == "family") {
      const Json& fj = field(cj, "cost", "family");
      require_keys(fj, "cost.family", {"name", "params"});
      cfg.family = string_field(fj, "cost.family", "name");
      cfg.family_params = family_params_from_json(fj.contains("params") ? fj.at("params") : Json::object(),
                                                  "cost.family.params", cfg.system, cfg.family);
    } else if (cfg.cost_mode == "state-cost-first" || cfg.cost_mode == "control-cost-first") {
      cfg.custom = cost_spec_from_json(field(cj, "cost", "custom"), "cost.custom");
      const int dim = cfg.cost_mode == "state-cost-first" ? cfg.system.n() : cfg.system.m();
      make_cost(*cfg.custom, dim, "cost.custom.params");
    } else {
      throw ConfigError("cost.mode: expected family, state-cost-first or control-cost-first, got '" + cfg.cost_mode + "'");
    }
  }

  if (j.contains("synthesis")) {
    const Json& yj = j.at("synthesis");
    require_keys(yj, "synthesis", {"objective", "M", "certificate", "grid", "tolerances", "m_range"});
    if (yj.contains("objective")) cfg.objective = objective_from_string(string_field(yj, "synthesis", "objective"));
    if (yj.contains("M")) {
      cfg.M = matrix(yj.at("M"), "synthesis.M");
      if (cfg.M->rows() != n || cfg.M->cols() != n)
        throw ConfigError("synthesis.M: expected " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (yj.contains("certificate")) cfg.certificate_path = string_field(yj, "synthesis", "certificate");
    if (yj.contains("grid")) cfg.grid = grid_from_json(yj.at("grid"), "synthesis.grid");
    if (yj.contains("tolerances")) cfg.tolerances = tolerances_from_json(yj.at("tolerances"), "synthesis.tolerances");
    if (yj.contains("m_range")) {
      const Vector r = vector(yj.at("m_range"), "synthesis.m_range");
      if (r.size() != 2 || !(r(0) > 0.0) || !(r(1) > r(0)))
        throw ConfigError("synthesis.m_range: expected [lo, hi] with 0 < lo < hi");
      cfg.m_lo = r(0);
      cfg.m_hi = r(1);
    }
  }

  if (j.contains("simulation")) {
    const Json& mj = j.at("simulation");
    require_keys(mj, "simulation", {"x0", "horizon", "seeds", "baseline", "controller", "baseline_Q", "baseline_R"});
    if (mj.contains("x0")) {
      cfg.x0 = vector(mj.at("x0"), "simulation.x0");
      if (cfg.x0->size() != n)
        throw ConfigError("simulation.x0: has length " + std::to_string(cfg.x0->size()) + ", expected " +
                          std::to_string(n));
    }
    if (mj.contains("horizon")) {
      const Json& h = mj.at("horizon");
      if (!h.is_number_integer() || h.get<long long>() < 1)
        throw ConfigError("simulation.horizon: must be an integer >= 1");
      cfg.horizon = h.get<int>();
    }
    if (mj.contains("seeds")) {
      const Json& s = mj.at("seeds");
      if (!s.is_array() || s.empty()) throw ConfigError("simulation.seeds: expected a non-empty list of integers");
      cfg.seeds.clear();
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i].is_number_unsigned())
          throw ConfigError("simulation.seeds[" + std::to_string(i) + "]: expected a nonnegative integer");
        cfg.seeds.push_back(s[i].get<std::uint64_t>());
      }
    }
    if (mj.contains("baseline")) {
      if (!mj.at("baseline").is_boolean()) throw ConfigError("simulation.baseline: expected true or false");
      cfg.baseline = mj.at("baseline").get<bool>();
    }
    if (mj.contains("controller")) {
      cfg.controller = string_field(mj, "simulation", "controller");
      if (cfg.controller != "printed" && cfg.controller != "derived")
        throw ConfigError("simulation.controller: expected printed or derived");
    }
    if (mj.contains("baseline_Q")) cfg.baseline_Q = matrix(mj.at("baseline_Q"), "simulation.baseline_Q");
    if (mj.contains("baseline_R")) cfg.baseline_R = matrix(mj.at("baseline_R"), "simulation.baseline_R");
  }

  cfg.out_dir = default_out_dir();
  if (j.contains("output")) {
    const Json& oj = j.at("output");
    require_keys(oj, "output", {"directory", "formats"});
    if (oj.contains("directory")) cfg.out_dir = string_field(oj, "output", "directory");
    if (oj.contains("formats")) {
      const Json& f = oj.at("formats");
      if (!f.is_array()) throw ConfigError("output.formats: expected a list");
      cfg.write_csv = cfg.write_json = false;
      for (const Json& v : f) {
        if (v == "csv")
          cfg.write_csv = true;
        else if (v == "json")
          cfg.write_json = true;
        else
          throw ConfigError("output.formats: unknown format " + v.dump());
      }
    }
  }

  if (j.contains("verify")) {
    const Json& vj = j.at("verify");
    require_keys(vj, "verify", {"properties", "samples"});
    if (vj.contains("properties")) {
      cfg.properties.clear();
      for (const Json& p : vj.at("properties")) {
        if (!p.is_string()) throw ConfigError("verify.properties: expected strings");
        const auto name = p.get<std::string>();
        if (std::find(all_properties().begin(), all_properties().end(), name) == all_properties().end())
          throw ConfigError("verify.properties: unknown property '" + name + "'");
        cfg.properties.push_back(name);
      }
    }
    if (vj.contains("samples")) {
      if (!vj.at("samples").is_number_integer() || vj.at("samples").get<int>() < 2)
        throw ConfigError("verify.samples: expected an integer >= 2");
      cfg.verify_samples = vj.at("samples").get<int>();
    }
  }

  if (cfg.cost_mode.empty() && !cfg.certificate_path)
    throw ConfigError("cost: missing required field (or give synthesis.certificate)");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  RunConfig cfg = parse_run_config(io::read_document(path), path);
  // Relative certificate paths resolve against the config's directory.
  if (cfg.certificate_path && std::filesystem::path(*cfg.certificate_path).is_relative() &&
      !std::filesystem::exists(*cfg.certificate_path))
    cfg.certificate_path = (std::filesystem::path(path).parent_path() / *cfg.certificate_path).string();
  return cfg;
}

// ---------------------------------------------------------------------------
// Certificate assembly

inline FeasibilityReport check_M_given_r_or_q(const SynthesisCertificate& c) {
  return c.mode == DesignMode::StateCostFirst ? check_M_given_q(c.system, *c.q, c.M, c.grid)
                                              : check_M_given_r(c.system, *c.r, c.M, c.grid);
}

inline GridSpec config_grid(const RunConfig& cfg) {
  if (cfg.grid) return *cfg.grid;
  GridSpec g;
  if (cfg.is_family() && cfg.family == "bangbang")
    g.scale = std::max(1.0, cfg.family_params.t / std::abs(cfg.family_params.b));
  return g;
}

inline FunctionPtr config_fixed_cost(const RunConfig& cfg) {
  if (cfg.is_family()) return family_fixed_cost(cfg.family, cfg.family_params);
  const int dim = cfg.cost_mode == "state-cost-first" ? cfg.system.n() : cfg.system.m();
  return make_cost(*cfg.custom, dim, "cost.custom.params");
}

inline DesignMode config_mode(const RunConfig& cfg) {
  if (cfg.is_family()) return family_mode(cfg.family);
  return design_mode_from_string(cfg.cost_mode);
}

/// (q, r) come from the family parameters at m; the certificate's M defaults
/// to m but may be set separately (synthesis.M) to validate a different M.
inline CertificateRecord record_for_family(const RunConfig& cfg, double m, std::optional<Matrix> M = std::nullopt) {
  ScalarFamilyParams p = cfg.family_params;
  p.m = m;
  ClosedFormFamily f = make_family(cfg.family, p);
  CertificateRecord rec;
  rec.cert = family_certificate(f, cfg.system.noise());
  rec.cert.grid = config_grid(cfg);
  rec.cert.tolerances = cfg.tolerances;
  rec.derived_at = rec.cert.M;
  if (M) {
    rec.cert.M = *M;
    rec.cert.feasibility = check_M_given_r_or_q(rec.cert);
  }
  return rec;
}

/// Searches or checks M per the config. Throws InfeasibleSynthesisError when
/// the feasibility condition fails at an explicit M.
inline CertificateRecord synthesize_record(const RunConfig& cfg) {
  const GridSpec grid = config_grid(cfg);
  const DesignMode mode = config_mode(cfg);
  const FunctionPtr fixed = config_fixed_cost(cfg);
  std::optional<Matrix> M = cfg.M;
  if (!M && cfg.is_family() && cfg.family_params.m > 0.0) M = Matrix::Constant(1, 1, cfg.family_params.m);

  CertificateRecord rec;
  if (M) {
    if (cfg.is_family()) {
      rec = record_for_family(cfg, cfg.family_params.m > 0.0 ? cfg.family_params.m : (*M)(0, 0), cfg.M);
    } else {
      rec.cert = certify(cfg.system, fixed, mode, *M, grid, cfg.tolerances, {}, "custom");
      rec.fixed_cost = cfg.custom;
      rec.derived_at = *M;
    }
    if (!rec.cert.feasibility.feasible) {
      std::vector<double> margins;
      for (const auto& g : rec.cert.feasibility.margins) margins.push_back(g.value);
      throw InfeasibleSynthesisError("the feasibility condition fails at the given M", margins);
    }
  } else {
    SearchOptions so;
    so.grid = grid;
    so.tolerances = cfg.tolerances;
    so.m_lo = cfg.m_lo;
    so.m_hi = cfg.m_hi;
    const Objective obj = cfg.objective.value_or(cfg.system.is_scalar() ? Objective::MaxMScalar : Objective::MaxMargin);
    SynthesisCertificate c = search_M(cfg.system, fixed, mode, obj, so, cfg.is_family() ? cfg.family : "custom");
    if (cfg.is_family()) {
      rec = record_for_family(cfg, c.M(0, 0));
    } else {
      rec.cert = std::move(c);
      rec.fixed_cost = cfg.custom;
      rec.derived_at = rec.cert.M;
    }
  }
  rec.riccati_residual = max_riccati_residual(rec.cert);
  if (rec.riccati_residual > cfg.tolerances.riccati)
    throw InfeasibleDerivationError("certificate fails the Riccati identity", rec.riccati_residual);
  return rec;
}

/// The certificate for simulate/verify: a prior synthesize output, or the
/// inline M (explicit, or the family's m).
inline CertificateRecord load_record(const RunConfig& cfg) {
  if (cfg.certificate_path) {
    CertificateRecord rec = certificate_from_json(io::read_document(*cfg.certificate_path), *cfg.certificate_path);
    if (rec.cert.system.A() != cfg.system.A() || rec.cert.system.B() != cfg.system.B())
      throw ConfigError(*cfg.certificate_path + ": certificate A, B differ from system.A, system.B");
    // Simulation noise comes from the run config.
    rec.cert.system = rec.cert.system.with_noise(cfg.system.noise());
    return rec;
  }
  if (!cfg.has_inline_certificate())
    throw ConfigError("no certificate: give synthesis.certificate, synthesis.M, or the family parameter m");
  if (cfg.is_family())
    return record_for_family(cfg, cfg.family_params.m > 0.0 ? cfg.family_params.m : (*cfg.M)(0, 0), cfg.M);
  CertificateRecord rec;
  rec.cert = certify(cfg.system, config_fixed_cost(cfg), config_mode(cfg), *cfg.M, config_grid(cfg), cfg.tolerances,
                     {}, "custom");
  rec.fixed_cost = cfg.custom;
  rec.derived_at = *cfg.M;
  return rec;
}

inline std::optional<ClosedFormFamily> record_family(const CertificateRecord& rec) {
  const auto& c = rec.cert;
  if (c.family == "custom") return std::nullopt;
  ScalarFamilyParams p{c.system.A()(0, 0), c.system.B()(0, 0), c.params.at("m"), 0.0, 0.0};
  if (c.family == "bangbang") p.t = c.params.at("t");
  if (c.family == "elasticnet") p.eps = c.params.at("eps");
  return make_family(c.family, p);
}

inline Controller record_controller(const CertificateRecord& rec, const std::string& which) {
  if (which == "printed")
    if (auto f = record_family(rec)) return f->controller;
  return certificate_controller(rec.cert);
}

/// LQR with Q = ½∇²q at a point of magnitude grid.scale and R = ½∇²r(0).
inline Controller baseline_controller(const SynthesisCertificate& c, const std::optional<Matrix>& Q_override,
                                      const std::optional<Matrix>& R_override) {
  const int n = c.system.n(), m = c.system.m();
  Matrix Q, R;
  if (Q_override) {
    Q = *Q_override;
  } else {
    std::optional<Matrix> h;
    for (double s : {1.0, 0.5, 2.0, 0.25, 4.0}) {
      h = c.q->hessian(Vector::Constant(n, s * c.grid.scale / std::sqrt(static_cast<double>(n))));
      if (h) break;
    }
    if (!h) throw ConfigError("baseline: q has no Hessian near the grid scale; set simulation.baseline_Q");
    Q = 0.5 * *h;
  }
  if (R_override) {
    R = *R_override;
  } else {
    auto h = c.r->hessian(Vector::Zero(m));
    if (!h) throw ConfigError("baseline: r has no Hessian at 0; set simulation.baseline_R");
    R = 0.5 * *h;
  }
  if (Q.rows() != n || Q.cols() != n) throw ConfigError("simulation.baseline_Q: dimension mismatch");
  if (R.rows() != m || R.cols() != m) throw ConfigError("simulation.baseline_R: dimension mismatch");
  const Matrix K = solve_dare(c.system, Q, R);
  return linear_controller("lqr", lqr_gain(c.system, K, R));
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt_matrix(const Matrix& M) {
  std::ostringstream os;
  os << std::setprecision(10) << "[";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    os << (i ? "; " : "");
    for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
  }
  os << "]";
  return os.str();
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError(dir + ": cannot create output directory: " + ec.message());
  return p;
}

inline void print_margins(std::ostream& out, const FeasibilityReport& f) {
  out << "route: " << f.route << "\n";
  for (const auto& m : f.margins) out << "  margin " << m.condition << " = " << m.value << "\n";
  if (f.numeric_convexity_verdict)
    out << "numeric convexity of derived dual: " << (*f.numeric_convexity_verdict ? "convex" : "not convex")
        << " (worst " << f.numeric_convexity_worst << ")\n";
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_synthesize(const RunConfig& cfg, std::ostream& out) {
  CertificateRecord rec = synthesize_record(cfg);
  const auto& c = rec.cert;
  out << std::setprecision(10);
  out << "mode: " << to_string(c.mode) << "\n";
  out << "family: " << c.family << "\n";
  out << "M: " << fmt_matrix(c.M) << "\n";
  print_margins(out, c.feasibility);
  out << "riccati identity max residual: " << rec.riccati_residual << "\n";
  const auto dir = ensure_dir(cfg.out_dir);
  const auto path = dir / "certificate.json";
  write_json_file(path.string(), to_json(rec));
  out << "certificate: " << path.string() << "\n";
  return kExitOk;
}

struct SeedResult {
  std::uint64_t seed = 0;
  double average_cost = 0.0;
  double max_abs_input = 0.0;
  double noise_floor = 0.0;
  std::optional<double> baseline_average_cost;
  double baseline_max_abs_input = 0.0;
  std::string csv;
  std::string baseline_csv;
};

inline double max_abs_input(const Trajectory& tr) {
  double m = 0.0;
  for (const Vector& u : tr.inputs) m = std::max(m, u.lpNorm<Eigen::Infinity>());
  return m;
}

inline SeedResult simulate_seed(const SynthesisCertificate& c, const Controller& ctl,
                                const std::optional<Controller>& baseline, const Vector& x0, int horizon,
                                std::uint64_t seed, bool want_csv) {
  SeedResult res;
  res.seed = seed;
  Trajectory tr = rollout(c.system, ctl, x0, horizon, seed);
  CostReport cost = evaluate_cost(tr, *c.q, *c.r, c.p.get());
  res.average_cost = cost.average_cost;
  res.noise_floor = cost.noise_floor_estimate;
  res.max_abs_input = max_abs_input(tr);
  if (want_csv) {
    std::ostringstream os;
    write_trajectory_csv(os, tr, cost);
    res.csv = os.str();
  }
  if (baseline) {
    Trajectory bt = rollout(c.system, *baseline, x0, horizon, seed);
    res.baseline_max_abs_input = max_abs_input(bt);
    try {
      CostReport bc = evaluate_cost(bt, *c.q, *c.r, c.p.get());
      res.baseline_average_cost = bc.average_cost;
      if (want_csv) {
        std::ostringstream os;
        write_trajectory_csv(os, bt, bc);
        res.baseline_csv = os.str();
      }
    } catch (const DomainError&) {
      // The baseline left the effective domain of r (e.g. exceeded a budget).
      res.baseline_average_cost.reset();
    }
  }
  return res;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / (v.size() - 1) / v.size());
  }
  return r;
}

/// Runs every seed; seeds are spread over worker threads and joined in seed order.
inline std::vector<SeedResult> run_seeds(const SynthesisCertificate& c, const Controller& ctl,
                                         const std::optional<Controller>& baseline, const Vector& x0, int horizon,
                                         const std::vector<std::uint64_t>& seeds, bool want_csv) {
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<SeedResult> results(seeds.size());
  for (std::size_t start = 0; start < seeds.size(); start += workers) {
    std::vector<std::future<SeedResult>> batch;
    const std::size_t stop = std::min(seeds.size(), start + workers);
    for (std::size_t i = start; i < stop; ++i)
      batch.push_back(std::async(std::launch::async, simulate_seed, std::cref(c), std::cref(ctl), std::cref(baseline),
                                 std::cref(x0), horizon, seeds[i], want_csv));
    for (std::size_t i = start; i < stop; ++i) results[i] = batch[i - start].get();
  }
  return results;
}

inline Vector config_x0(const RunConfig& cfg, const SynthesisCertificate& c) {
  if (cfg.x0) return *cfg.x0;
  return Vector::Constant(c.system.n(), c.grid.scale);
}

inline std::vector<std::uint64_t> shifted_seeds(const RunConfig& cfg, std::int64_t offset) {
  std::vector<std::uint64_t> seeds;
  for (auto s : cfg.seeds) seeds.push_back(s + static_cast<std::uint64_t>(offset));
  return seeds;
}

inline Json summarize(const std::vector<SeedResult>& results, bool baseline) {
  std::vector<double> costs, bcosts, diffs;
  double umax = 0.0, bumax = 0.0, floor = 0.0;
  bool baseline_finite = true;
  Json per_seed = Json::array();
  for (const auto& r : results) {
    costs.push_back(r.average_cost);
    umax = std::max(umax, r.max_abs_input);
    floor += r.noise_floor / results.size();
    Json row{{"seed", r.seed}, {"average_cost", r.average_cost}, {"max_abs_input", r.max_abs_input}};
    if (baseline) {
      bumax = std::max(bumax, r.baseline_max_abs_input);
      if (r.baseline_average_cost) {
        bcosts.push_back(*r.baseline_average_cost);
        diffs.push_back(r.average_cost - *r.baseline_average_cost);
        row["baseline_average_cost"] = *r.baseline_average_cost;
      } else {
        baseline_finite = false;
        row["baseline_average_cost"] = nullptr;
      }
    }
    per_seed.push_back(row);
  }
  const auto s = mean_stderr(costs);
  Json j{{"seeds", results.size()},
         {"average_cost", {{"mean", s.mean}, {"stderr", s.stderr_}}},
         {"max_abs_input", umax},
         {"noise_floor_estimate", floor},
         {"per_seed", per_seed}};
  if (baseline) {
    Json b{{"max_abs_input", bumax}};
    if (baseline_finite) {
      const auto bs = mean_stderr(bcosts);
      const auto ds = mean_stderr(diffs);
      b["average_cost"] = Json{{"mean", bs.mean}, {"stderr", bs.stderr_}};
      b["paired_difference"] = Json{{"mean", ds.mean}, {"stderr", ds.stderr_}};
    } else {
      b["average_cost"] = nullptr;
      b["note"] = "baseline inputs left the effective domain of r on some seed";
    }
    j["baseline_lqr"] = b;
  }
  return j;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::int64_t seed_offset = 0) {
  CertificateRecord rec = load_record(cfg);
  const auto& c = rec.cert;
  const Controller ctl = record_controller(rec, cfg.controller);
  std::optional<Controller> baseline;
  if (cfg.baseline) baseline = baseline_controller(c, cfg.baseline_Q, cfg.baseline_R);
  const Vector x0 = config_x0(cfg, c);
  const auto seeds = shifted_seeds(cfg, seed_offset);
  const auto results = run_seeds(c, ctl, baseline, x0, cfg.horizon, seeds, cfg.write_csv);

  const auto dir = ensure_dir(cfg.out_dir);
  if (cfg.write_csv) {
    for (const auto& r : results) {
      std::ofstream(dir / ("trajectory_seed" + std::to_string(r.seed) + ".csv"), std::ios::binary) << r.csv;
      if (!r.baseline_csv.empty())
        std::ofstream(dir / ("baseline_seed" + std::to_string(r.seed) + ".csv"), std::ios::binary) << r.baseline_csv;
    }
  }
  Json summary = summarize(results, cfg.baseline);
  summary["controller"] = ctl.label();
  summary["horizon"] = cfg.horizon;
  summary["rng"] = std::string(CounterRng::kAlgorithm);
  if (cfg.write_json) write_json_file((dir / "summary.json").string(), summary);
  out << std::setprecision(10);
  out << "controller: " << ctl.label() << ", seeds: " << results.size() << ", horizon: " << cfg.horizon << "\n";
  out << "average cost: " << summary["average_cost"]["mean"].get<double>() << " +/- "
      << summary["average_cost"]["stderr"].get<double>() << "\n";
  out << "max |u|: " << summary["max_abs_input"].get<double>() << "\n";
  if (cfg.baseline && !summary["baseline_lqr"]["average_cost"].is_null())
    out << "baseline lqr average cost: " << summary["baseline_lqr"]["average_cost"]["mean"].get<double>() << " +/- "
        << summary["baseline_lqr"]["average_cost"]["stderr"].get<double>() << "\n";
  out << "output: " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& out, std::int64_t seed_offset = 0) {
  CertificateRecord rec = load_record(cfg);
  const auto& c = rec.cert;
  const Controller ctl = record_controller(rec, cfg.controller);
  const std::optional<Controller> baseline = baseline_controller(c, cfg.baseline_Q, cfg.baseline_R);
  const auto results = run_seeds(c, ctl, baseline, config_x0(cfg, c), cfg.horizon, shifted_seeds(cfg, seed_offset), false);
  Json summary = summarize(results, true);
  summary["controller"] = ctl.label();
  summary["horizon"] = cfg.horizon;
  summary["rng"] = std::string(CounterRng::kAlgorithm);
  const auto dir = ensure_dir(cfg.out_dir);
  if (cfg.write_json) write_json_file((dir / "compare.json").string(), summary);
  out << std::setprecision(10);
  out << "bregman average cost: " << summary["average_cost"]["mean"].get<double>() << " +/- "
      << summary["average_cost"]["stderr"].get<double>() << "\n";
  const Json& b = summary["baseline_lqr"];
  if (b["average_cost"].is_null()) {
    out << "lqr average cost: undefined (" << b["note"].get<std::string>() << ")\n";
  } else {
    out << "lqr average cost: " << b["average_cost"]["mean"].get<double>() << " +/- "
        << b["average_cost"]["stderr"].get<double>() << "\n";
    out << "paired difference (bregman - lqr): " << b["paired_difference"]["mean"].get<double>() << " +/- "
        << b["paired_difference"]["stderr"].get<double>() << "\n";
  }
  return kExitOk;
}

struct PropertyResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Runs the selected property suites against a certificate.
inline std::vector<PropertyResult> verify_certificate(const SynthesisCertificate& c,
                                                      const std::vector<std::string>& properties, int samples,
                                                      std::optional<Vector> x0 = std::nullopt) {
  std::vector<PropertyResult> out;
  const int n = c.system.n();
  const auto xs = spread_samples(n, samples, c.grid);
  const Controller ctl = certificate_controller(c);
  for (const std::string& prop : properties) {
    PropertyResult r;
    r.name = prop;
    if (prop == "bregman") {
      // Nonnegativity and the three-point identity for q and p.
      r.tolerance = 1e-9;
      double worst = 0.0;
      for (const FunctionPtr& f : {c.q, c.p}) {
        for (std::size_t i = 0; i + 2 < xs.size(); i += 3) {
          const Vector &x = xs[i], &y = xs[i + 1], &z = xs[i + 2];
          const double dxy = eval_bregman(*f, x, y), dxz = eval_bregman(*f, x, z), dzy = eval_bregman(*f, z, y);
          const double cos = dxy - dxz - dzy + (f->gradient(y) - f->gradient(z)).dot(x - z);
          const double scale = 1.0 + std::abs(dxy) + std::abs(dxz) + std::abs(dzy);
          worst = std::max({worst, std::abs(cos) / scale, std::max(0.0, -dxy) / scale});
        }
      }
      r.worst = worst;
    } else if (prop == "riccati") {
      r.tolerance = c.tolerances.riccati;
      r.worst = max_riccati_residual(c, samples);
    } else if (prop == "kkt") {
      r.tolerance = c.tolerances.kkt;
      for (const Vector& x : xs) {
        const auto k = kkt_residual(c.system, *c.r, *c.p, c.M, x, ctl.feedback(x));
        r.worst = std::max(r.worst, k.max_norm() / (1.0 + (2.0 * c.M * x).norm()));
      }
    } else if (prop == "bellman") {
      r.tolerance = c.tolerances.bellman;
      r.worst = bellman_fixed_point_check(c, spread_samples(n, 20, c.grid));
    } else if (prop == "lyapunov") {
      r.tolerance = c.tolerances.riccati;
      const Vector start = x0.value_or(Vector::Constant(n, c.grid.scale));
      const Trajectory tr = rollout(c.system.with_noise(NoiseModel::zero(n)), ctl, start, 50, 0);
      const auto lm = lyapunov_monitor(c.system, tr, *c.p, *c.q, *c.r);
      r.worst = lm.max_relative_residual;
      if (!lm.strictly_decreasing) {
        r.detail = "p(x_k) not strictly decreasing at step " + std::to_string(lm.first_non_decrease);
        r.worst = std::max(r.worst, kInf);
      }
    } else if (prop == "expectation") {
      const NoiseModel noise = c.system.noise().family() == NoiseFamily::DegenerateZero
                                   ? NoiseModel::gaussian(Matrix::Identity(n, n))
                                   : c.system.noise();
      double worst_sigma = 0.0;
      for (double s : {0.0, 1.0}) {
        const Vector z = Vector::Constant(n, s * c.grid.scale);
        const auto rep = expectation_decomposition_check(*c.q, noise, z, 100000, c.grid.seed);
        worst_sigma = std::max(worst_sigma, rep.std_error > 0.0 ? rep.residual / rep.std_error : (rep.residual > 0 ? kInf : 0.0));
      }
      r.tolerance = 4.0;
      r.worst = worst_sigma;
      r.detail = "in standard errors";
    }
    r.pass = r.worst <= r.tolerance;
    out.push_back(r);
  }
  return out;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  if (cfg.properties.empty()) throw ConfigError("verify.properties: empty property selection");
  CertificateRecord rec = load_record(cfg);
  const auto results = verify_certificate(rec.cert, cfg.properties, cfg.verify_samples, cfg.x0);
  bool all = true;
  out << std::setprecision(6);
  for (const auto& r : results) {
    all = all && r.pass;
    out << (r.pass ? "PASS " : "FAIL ") << r.name << "  worst=" << r.worst << "  tol=" << r.tolerance;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << "\n";
  }
  return all ? kExitOk : kExitVerifyFailed;
}

/// Maps errors to exit codes: infeasibility → 2, everything else → 1.
inline int run_command(const std::string& command, const std::string& config_path, const std::optional<std::string>& out_dir,
                       std::int64_t seed_offset, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg = load_run_config(config_path);
    if (out_dir) cfg.out_dir = *out_dir;
    if (command == "synthesize") return cmd_synthesize(cfg, out);
    if (command == "simulate") return cmd_simulate(cfg, out, seed_offset);
    if (command == "verify") return cmd_verify(cfg, out);
    if (command == "compare") return cmd_compare(cfg, out, seed_offset);
    err << "unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const InfeasibleSynthesisError& e) {
    err << "infeasible: " << e.what() << "\n";
    for (double m : e.best_margins()) err << "  margin " << m << "\n";
    return kExitInfeasible;
  } catch (const InsufficientHypothesesError& e) {
    err << "infeasible: insufficient hypotheses: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InfeasibleDerivationError& e) {
    err << "infeasible: " << e.what() << " (worst " << e.worst_violation() << ")\n";
    return kExitInfeasible;
  } catch (const FamilyInfeasibilityError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace bregctl
