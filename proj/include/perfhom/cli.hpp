#pragma once

// Run files and the experiment commands behind the `perfhom` driver.
//
// A run file is INI: top-level keys `experiment`, `eps0`, `seed` and the
// sections [geometry] [lattice] [box] [vorticity] [k] [solver] [euler]
// [analysis] [sweep]. See README.md for every key.

#include <omp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

#include "perfhom/experiments.hpp"

namespace perfhom {

inline constexpr const char* summary_schema = "v1";

struct VorticitySpec {
  std::string shape = "disk";  ///< disk, bump, pair, linear, none
  Vec2 center{-1.0, 0.5};
  double radius = 0.3;
  double amplitude = 1.0;
  Vec2 gradient{1.0, 0.0};     ///< linear only
};

struct KSpec {
  std::string source = "lattice";  ///< lattice, bump, disk, zero
  Vec2 center{0.5, 0.5};
  double radius = 0.5;
  double amplitude = 0.04;
};

struct SolverSpec {
  int depth = 3;
  int oracle_order = 8;
  int oracle_points = 64;
  std::size_t oracle_max_holes = 64;
  double h = 1.0 / 64;
  std::optional<Rect> domain;
  double pad = 4.0;
  double tol = 1e-10;
  int max_iter = 50;
  LBackend backend = LBackend::spectral;
  bool full_solve = false;
};

struct EulerSpec {
  double dt = 0.1;
  double T = 1.0;
  double blob = 0.0625;
  double h_p = 0.0625;
  double margin = 0.0;
  int output_every = 1;
};

struct AnalysisSpec {
  double eta = 0.5;
  std::optional<Rect> probe;
};

struct SweepSpec {
  std::string parameter;  ///< n_per_side (divcurl), knorm (homog), a_over_d or d (sweep)
  std::vector<double> values;
  double a_coeff = 2.0;   ///< parameter d: a = a_coeff d^2
};

struct RunConfig {
  std::string experiment;
  GeometrySpec geometry;
  bool has_geometry = false;
  VorticitySpec vorticity;
  KSpec k;
  SolverSpec solver;
  EulerSpec euler;
  AnalysisSpec analysis;
  SweepSpec sweep;
  std::string canonical;  ///< normalized INI text the hash is taken of
};

inline const std::vector<std::string>& experiments() {
  static const std::vector<std::string> e{"divcurl", "reflect", "homog", "euler", "sweep"};
  return e;
}

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace detail {

using boost::property_tree::ptree;

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("parse:" + key, "cannot read '" + text + "' as a list of numbers for " + key);
    }
  }
  return out;
}

template <class T>
T get(const ptree& pt, const std::string& key, T fallback) {
  if (!pt.get_optional<std::string>(key)) return fallback;
  try {
    return pt.get<T>(key);  // throws on malformed text, unlike the defaulted overload
  } catch (const boost::property_tree::ptree_error&) {
    throw ConfigError("parse:" + key, "cannot read value of " + key);
  }
}

inline Vec2 get_vec(const ptree& pt, const std::string& key, Vec2 fallback) {
  const auto s = pt.get_optional<std::string>(key);
  if (!s) return fallback;
  const auto v = parse_list(key, *s);
  if (v.size() != 2) throw ConfigError("parse:" + key, key + " needs two numbers x,y");
  return {v[0], v[1]};
}

inline std::optional<Rect> get_rect(const ptree& pt, const std::string& key) {
  const auto s = pt.get_optional<std::string>(key);
  if (!s) return std::nullopt;
  const auto v = parse_list(key, *s);
  if (v.size() != 4) throw ConfigError("parse:" + key, key + " needs four numbers x0,y0,x1,y1");
  const Rect r{v[0], v[1], v[2], v[3]};
  if (!r.valid()) throw ConfigError(key, key + " must have x0 < x1 and y0 < y1");
  return r;
}

inline void require(bool ok, const std::string& invariant, const std::string& what) {
  if (!ok) throw ConfigError(invariant, what);
}

inline bool has(const ptree& pt, const std::string& section) { return pt.get_child_optional(section).has_value(); }

}  // namespace detail

/// Checks everything a command relies on; throws ConfigError naming the
/// first violated invariant.
inline void validate(const RunConfig& c) {
  using detail::require;
  const auto& e = experiments();
  require(std::find(e.begin(), e.end(), c.experiment) != e.end(), "experiment",
          "unknown experiment '" + c.experiment + "'");
  const GeometrySpec& g = c.geometry;
  require(g.eps0 > 0.0 && g.eps0 < 0.5, "eps0", "eps0 must lie in (0, 1/2)");
  require(g.box.valid(), "box", "box needs x0 < x1 and y0 < y1");
  const std::vector<std::string> kinds{"lattice", "two_hole", "single", "random", "none"};
  require(std::find(kinds.begin(), kinds.end(), g.kind) != kinds.end(), "geometry.kind",
          "unknown geometry kind '" + g.kind + "'");
  if (g.kind == "lattice") {
    require(g.n >= 1, "lattice.n", "lattice.n must be >= 1");
    require(g.epsilon > 0.0, "lattice.epsilon", "lattice.epsilon must be positive");
    require(g.epsilon <= g.eps0, "a_over_d", "lattice.epsilon exceeds eps0");
  }
  if (g.kind == "two_hole" || g.kind == "single" || g.kind == "random")
    require(g.a > 0.0, "geometry.a", "geometry.a must be positive");
  if (g.kind == "two_hole" || g.kind == "random") {
    require(g.d > 0.0, "geometry.d", "geometry.d must be positive");
    require(g.a / g.d <= g.eps0, "a_over_d", "a/d exceeds eps0");
  }
  if (g.kind == "random") require(g.count >= 1, "geometry.count", "geometry.count must be >= 1");
  if (c.has_geometry && g.kind != "random") {
    PorousConfig built;
    try {
      built = g.build();
    } catch (const InvalidArgument& e) {
      throw ConfigError("geometry", e.what());
    }
    const auto report = perfhom::validate(built);
    require(report.passed(), report.passed() ? "" : report.violations.front(),
            "geometry violates " + (report.passed() ? std::string() : report.violations.front()));
  }

  const VorticitySpec& v = c.vorticity;
  const std::vector<std::string> shapes{"disk", "bump", "pair", "linear", "none"};
  require(std::find(shapes.begin(), shapes.end(), v.shape) != shapes.end(), "vorticity.shape",
          "unknown vorticity shape '" + v.shape + "'");
  if (v.shape != "linear" && v.shape != "none")
    require(v.radius > 0.0, "vorticity.radius", "vorticity.radius must be positive");

  const std::vector<std::string> sources{"lattice", "bump", "disk", "zero"};
  require(std::find(sources.begin(), sources.end(), c.k.source) != sources.end(), "k.source",
          "unknown k source '" + c.k.source + "'");
  require(c.k.radius > 0.0, "k.radius", "k.radius must be positive");
  require(c.k.amplitude >= 0.0 && c.k.amplitude < 1.0, "k.amplitude", "k.amplitude must lie in [0, 1)");

  const SolverSpec& s = c.solver;
  require(s.depth >= 1, "solver.depth", "solver.depth must be >= 1");
  require(s.oracle_order >= 1, "solver.oracle_order", "solver.oracle_order must be >= 1");
  require(s.oracle_points >= 2 * s.oracle_order + 1, "solver.oracle_points",
          "solver.oracle_points must be >= 2 oracle_order + 1");
  require(s.h > 0.0, "solver.h", "solver.h must be positive");
  require(s.pad >= 4.0, "solver.pad", "solver.pad must be >= 4");
  require(s.tol > 0.0, "solver.tol", "solver.tol must be positive");
  require(s.max_iter >= 1, "solver.max_iter", "solver.max_iter must be >= 1");

  const EulerSpec& u = c.euler;
  require(u.dt > 0.0, "euler.dt", "euler.dt must be positive");
  require(u.T >= 0.0, "euler.T", "euler.T must be nonnegative");
  require(u.blob >= 0.0, "euler.blob", "euler.blob must be nonnegative");
  require(u.h_p > 0.0, "euler.h_p", "euler.h_p must be positive");
  require(u.margin >= 0.0, "euler.margin", "euler.margin must be nonnegative");
  require(u.output_every >= 1, "euler.output_every", "euler.output_every must be >= 1");

  require(c.analysis.eta > 0.0 && c.analysis.eta < 1.0, "analysis.eta", "analysis.eta must lie in (0, 1)");

  const std::string& x = c.experiment;
  const bool grid_vorticity = v.shape == "disk" || v.shape == "bump";
  if (x == "divcurl") {
    require(c.has_geometry, "block:geometry", "divcurl needs a [geometry] or [lattice] block");
    require(g.kind == "lattice", "geometry.kind", "divcurl needs a lattice");
    require(s.domain.has_value(), "solver.domain", "divcurl needs solver.domain");
    require(c.analysis.probe.has_value(), "analysis.probe", "divcurl needs analysis.probe");
    require(grid_vorticity, "vorticity.shape", "divcurl needs a disk or bump vorticity");
  }
  if (x == "reflect" || x == "sweep") {
    require(c.has_geometry, "block:geometry", x + " needs a [geometry] or [lattice] block");
    require(v.shape != "none" && v.shape != "pair", "vorticity.shape", x + " needs disk, bump or linear data");
  }
  if (x == "homog") {
    require(s.domain.has_value(), "solver.domain", "homog needs solver.domain");
    require(grid_vorticity, "vorticity.shape", "homog needs a disk or bump vorticity");
    if (c.k.source == "lattice") require(c.has_geometry, "block:geometry", "k.source = lattice needs a geometry");
  }
  if (x == "euler") {
    require(v.shape != "linear" && v.shape != "none", "vorticity.shape", "euler needs disk, bump or pair vorticity");
    if (v.shape != "pair") require(s.domain.has_value(), "solver.domain", "euler with a grid vorticity needs solver.domain");
    if (c.has_geometry && g.kind != "none")
      require(c.analysis.probe.has_value(), "analysis.probe", "euler with a medium needs analysis.probe");
  }

  const SweepSpec& w = c.sweep;
  if (!w.parameter.empty()) {
    require(!w.values.empty(), "sweep.values", "sweep.values must not be empty");
    for (double val : w.values) require(val > 0.0, "sweep.values", "sweep values must be positive");
    const bool ok = (x == "divcurl" && w.parameter == "n_per_side") || (x == "homog" && w.parameter == "knorm") ||
                    (x == "sweep" && (w.parameter == "a_over_d" || w.parameter == "d"));
    require(ok, "sweep.parameter", "sweep.parameter '" + w.parameter + "' does not apply to " + x);
    if (w.parameter == "n_per_side")
      for (double val : w.values) require(val == std::floor(val), "sweep.values", "n_per_side values must be integers");
    if (w.parameter == "knorm") require(c.k.source == "bump" || c.k.source == "disk", "k.source",
                                        "a knorm sweep needs k.source = bump or disk");
    if (w.parameter == "a_over_d" || w.parameter == "d")
      require(g.kind == "lattice", "geometry.kind", "sweep needs a lattice");
    if (w.parameter == "a_over_d")
      for (double val : w.values) require(val <= g.eps0, "a_over_d", "sweep value exceeds eps0");
    if (w.parameter == "d") require(w.a_coeff > 0.0, "sweep.a_coeff", "sweep.a_coeff must be positive");
  } else {
    require(x != "sweep", "block:sweep", "sweep needs sweep.parameter and sweep.values");
  }
}

/// Reads a run file. `seed`, when given, replaces the file's seed.
inline RunConfig parse_config(std::istream& is, std::optional<std::uint64_t> seed = std::nullopt,
                              const std::string& experiment_override = "") {
  using detail::get;
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("syntax", e.what());
  }
  if (seed) pt.put("seed", *seed);
  if (!experiment_override.empty()) {
    const auto given = pt.get_optional<std::string>("experiment");
    if (given && *given != experiment_override)
      throw ConfigError("experiment", "run file is for '" + *given + "', not '" + experiment_override + "'");
    pt.put("experiment", experiment_override);
  }

  RunConfig c;
  c.experiment = get<std::string>(pt, "experiment", "");
  try {
    c.geometry = geometry_from_ptree(pt);
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError("parse:geometry", e.what());
  }
  c.has_geometry = detail::has(pt, "geometry") || detail::has(pt, "lattice");
  if (!c.has_geometry) c.geometry.kind = "none";

  auto& v = c.vorticity;
  v.shape = get<std::string>(pt, "vorticity.shape", v.shape);
  v.center = detail::get_vec(pt, "vorticity.center", v.center);
  v.radius = get(pt, "vorticity.radius", v.radius);
  v.amplitude = get(pt, "vorticity.amplitude", v.amplitude);
  v.gradient = detail::get_vec(pt, "vorticity.gradient", v.gradient);

  auto& k = c.k;
  k.source = get<std::string>(pt, "k.source", k.source);
  k.center = detail::get_vec(pt, "k.center", k.center);
  k.radius = get(pt, "k.radius", k.radius);
  k.amplitude = get(pt, "k.amplitude", k.amplitude);

  auto& s = c.solver;
  s.depth = get(pt, "solver.depth", s.depth);
  s.oracle_order = get(pt, "solver.oracle_order", s.oracle_order);
  s.oracle_points = get(pt, "solver.oracle_points", s.oracle_points);
  s.oracle_max_holes = get(pt, "solver.oracle_max_holes", s.oracle_max_holes);
  s.h = get(pt, "solver.h", s.h);
  s.domain = detail::get_rect(pt, "solver.domain");
  s.pad = get(pt, "solver.pad", s.pad);
  s.tol = get(pt, "solver.tol", s.tol);
  s.max_iter = get(pt, "solver.max_iter", s.max_iter);
  const auto backend = get<std::string>(pt, "solver.backend", "spectral");
  if (backend != "spectral" && backend != "direct")
    throw ConfigError("solver.backend", "solver.backend must be spectral or direct");
  s.backend = backend == "direct" ? LBackend::direct : LBackend::spectral;
  s.full_solve = get(pt, "solver.full_solve", s.full_solve);

  auto& u = c.euler;
  u.dt = get(pt, "euler.dt", u.dt);
  u.T = get(pt, "euler.T", u.T);
  u.blob = get(pt, "euler.blob", u.blob);
  u.h_p = get(pt, "euler.h_p", u.h_p);
  u.margin = get(pt, "euler.margin", u.margin);
  u.output_every = get(pt, "euler.output_every", u.output_every);

  c.analysis.eta = get(pt, "analysis.eta", c.analysis.eta);
  c.analysis.probe = detail::get_rect(pt, "analysis.probe");

  c.sweep.parameter = get<std::string>(pt, "sweep.parameter", "");
  if (const auto vals = pt.get_optional<std::string>("sweep.values")) c.sweep.values = detail::parse_list("sweep.values", *vals);
  c.sweep.a_coeff = get(pt, "sweep.a_coeff", c.sweep.a_coeff);

  std::ostringstream canon;
  boost::property_tree::ini_parser::write_ini(canon, pt);
  c.canonical = canon.str();
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt,
                             const std::string& experiment_override = "") {
  std::ifstream is(path);
  if (!is) throw ConfigError("file", "cannot open run file " + path.string());
  return parse_config(is, seed, experiment_override);
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(c.canonical); }

// --- shared pieces ------------------------------------------------------------------

inline OracleOptions oracle_options(const RunConfig& c) {
  OracleOptions o;
  o.order = c.solver.oracle_order;
  o.pts_per_hole = c.solver.oracle_points;
  o.max_holes = c.solver.oracle_max_holes;
  return o;
}

inline SolveOptions solve_options(const RunConfig& c) {
  return {c.solver.tol, c.solver.max_iter, {c.solver.backend, c.solver.pad}, {}};
}

inline nlohmann::json tolerances(const RunConfig& c) {
  const OracleOptions o = oracle_options(c);
  return {{"version", summary_schema},
          {"solver_tol", c.solver.tol},
          {"max_iter", c.solver.max_iter},
          {"pad", c.solver.pad},
          {"oracle_residual_tol", o.residual_tol},
          {"hole_rel_tol", 1e-12},
          {"closed_form_tol", 1e-10},
          {"period_rel_tol", 0.02}};
}

/// Vorticity rasterized on g (disk or bump).
inline ScalarGridField vorticity_field(const VorticitySpec& v, const GridSpec& g) {
  if (v.shape == "disk") return rasterize_disk(g, v.center, v.radius, v.amplitude);
  if (v.shape == "bump") return rasterize_bump(g, v.center, v.radius, v.amplitude);
  return ScalarGridField(g);
}

using Source = std::variant<GridVorticity, VortexParticles, LinearPotential>;

/// The vorticity as a source for the pointwise solvers; grid shapes live on
/// a grid of spacing solver.h around their support.
inline Source make_source(const RunConfig& c) {
  const VorticitySpec& v = c.vorticity;
  if (v.shape == "linear") return LinearPotential{v.gradient, 0.0};
  if (v.shape == "pair")
    return VortexParticles{{v.center - Vec2{v.radius, 0.0}, v.center + Vec2{v.radius, 0.0}},
                           {v.amplitude, v.amplitude}, c.euler.blob, 0.0};
  const Rect b = Rect{v.center.x - v.radius, v.center.y - v.radius, v.center.x + v.radius, v.center.y + v.radius}
                     .inflated(c.solver.h);
  return GridVorticity(vorticity_field(v, GridSpec::covering(b, c.solver.h)));
}

inline VolumeFraction make_k(const RunConfig& c, const GridSpec& g, double amplitude) {
  const KSpec& k = c.k;
  if (k.source == "lattice") return lattice_fraction(c.geometry.build(), g);
  if (k.source == "bump") return {rasterize_bump(g, k.center, k.radius, amplitude), c.geometry.eps0};
  if (k.source == "disk") return {rasterize_disk(g, k.center, k.radius, amplitude), c.geometry.eps0};
  return {ScalarGridField(g), c.geometry.eps0};
}

/// Log-log slope, or null when the data do not allow a fit.
inline nlohmann::json try_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    const auto f = fit_exponent(xs, ys);
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
  } catch (const InvalidArgument&) {
    return nullptr;
  }
}

inline std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
  std::ofstream os(dir / name);
  if (!os) throw Error("cannot write " + (dir / name).string());
  os << std::setprecision(17);
  return os;
}

// --- commands ------------------------------------------------------------------------
// Each writes its CSV files into `out` and returns the "results" part of the
// JSON summary.

inline nlohmann::json cmd_reflect(const RunConfig& cfg, const std::filesystem::path& out) {
  const PorousConfig c = cfg.geometry.build();
  const Source src = make_source(cfg);
  nlohmann::json r{{"holes", c.size()}, {"a_over_d", c.ratio()}, {"depth", cfg.solver.depth}};
  std::visit(
      [&](const auto& f) {
        const auto hs = run_reflections(f, c, cfg.solver.depth);
        auto dip = open_out(out, "dipoles.csv");
        write_dipoles_csv(dip, hs.levels());
        auto nrm = open_out(out, "norms.csv");
        write_norms_csv(nrm, hs.levels());
        if (hs.depth() >= 3) {
          const auto rep = contraction_report(level_norms(hs, 2.0));
          r["contraction"] = {{"ratio", rep.ratio}, {"max_ratio", rep.max_ratio}, {"ratios", rep.ratios},
                              {"hit_zero", rep.hit_zero}};
        }
        r["boundary_residual"] = boundary_residual(hs);
        if (cfg.geometry.kind == "two_hole" && cfg.solver.depth >= 2) {
          const auto t = two_hole_closed_form(f, c, cfg.solver.depth);
          r["closed_form"] = {{"ratio", t.ratio},
                              {"measured_ratio", t.measured_ratio},
                              {"max_rel_err", t.max_rel_err},
                              {"ratio_err", std::abs(t.measured_ratio - t.ratio)},
                              {"matches", t.max_rel_err <= 1e-10 && std::abs(t.measured_ratio - t.ratio) <= 1e-10}};
        }
      },
      src);
  if (cfg.geometry.kind == "single" && cfg.vorticity.shape == "linear") {
    const auto s = single_hole_oracle(std::get<LinearPotential>(src), c, oracle_options(cfg));
    r["oracle"] = {{"dipole_rel_err", s.dipole_rel_err}, {"residual", s.residual}, {"flux", s.flux},
                   {"solver", s.solver}};
  }
  return r;
}

inline nlohmann::json cmd_homog(const RunConfig& cfg, const std::filesystem::path& out) {
  const GridSpec g = GridSpec::covering(*cfg.solver.domain, cfg.solver.h);
  const auto f = vorticity_field(cfg.vorticity, g);
  const auto grad0 = grad_psi0_grid(f);
  const EffectiveMatrix M = EffectiveMatrix::disk();
  const SolveOptions opt = solve_options(cfg);
  const std::vector<double> amps =
      cfg.sweep.parameter == "knorm" ? cfg.sweep.values : std::vector<double>{cfg.k.amplitude};
  std::vector<double> knorm, e0, et;
  std::vector<int> its;
  nlohmann::json runs = nlohmann::json::array();
  for (double amp : amps) {
    const VolumeFraction k = make_k(cfg, g, amp);
    const auto sol = solve_psic(grad0, k, M, opt);
    const auto tilde = first_order_expansion(grad0, k, M, opt.apply);
    knorm.push_back(k.sup_norm());
    e0.push_back((sol.grad - grad0).l2_norm());
    et.push_back((sol.grad - tilde).l2_norm());
    its.push_back(sol.iterations);
    runs.push_back({{"knorm", knorm.back()},
                    {"iterations", sol.iterations},
                    {"last_increment", sol.last_increment},
                    {"contraction", sol.contraction()},
                    {"backend", sol.backend},
                    {"modified_curl_residual", modified_curl_residual(sol.grad, k.field, M, f)}});
  }
  auto os = open_out(out, "sweep.csv");
  write_sweep_csv(os, knorm, e0, et, its);
  nlohmann::json r{{"grid", to_json(g)}, {"runs", runs}};
  if (knorm.size() > 1) r["fit"] = {{"err_psi0", try_fit(knorm, e0)}, {"err_tilde", try_fit(knorm, et)}};
  return r;
}

inline nlohmann::json cmd_divcurl(const RunConfig& cfg, const std::filesystem::path& out) {
  const GridSpec g = GridSpec::covering(*cfg.solver.domain, cfg.solver.h);
  const auto f = vorticity_field(cfg.vorticity, g);
  std::vector<int> ns;
  if (cfg.sweep.parameter == "n_per_side")
    for (double v : cfg.sweep.values) ns.push_back(static_cast<int>(v));
  else
    ns.push_back(cfg.geometry.n);
  auto os = open_out(out, "gamma.csv");
  os << "row,n_per_side,d,holes,grad_gamma1,gamma2,total,normalized,F,cells\n";
  nlohmann::json rows = nlohmann::json::array();
  std::vector<double> ds, totals;
  for (int n : ns) {
    GeometrySpec gs = cfg.geometry;
    gs.n = n;
    const PorousConfig c = gs.build();
    const auto res = divcurl_gamma(f, c, *cfg.analysis.probe, oracle_options(cfg), solve_options(cfg),
                                   cfg.solver.depth, cfg.analysis.eta);
    const double total = res.gamma.grad_gamma1 + res.gamma.gamma2;
    ds.push_back(c.d);
    totals.push_back(total);
    os << "run," << n << ',' << c.d << ',' << c.size() << ',' << res.gamma.grad_gamma1 << ',' << res.gamma.gamma2 << ','
       << total << ',' << res.gamma.normalized() << ',' << res.budget.F_value << ',' << res.gamma.cells << '\n';
    auto j = to_json(res.gamma);
    j["n_per_side"] = n;
    j["holes"] = c.size();
    j["oracle_residual"] = res.oracle_residual;
    j["oracle_solver"] = res.oracle_solver;
    j["homog_iterations"] = res.homog_iterations;
    j["contraction_ratio"] = res.contraction.ratio;
    j["k_inf"] = res.budget.k_inf;
    rows.push_back(j);
  }
  nlohmann::json r{{"rows", rows}};
  if (ns.size() > 1) {
    const auto fit = try_fit(ds, totals);
    r["fit_total_vs_d"] = fit;
    os << "fit,,,,,," << (fit.is_null() ? std::nan("") : fit["slope"].get<double>()) << ",,,\n";
  }
  return r;
}

inline nlohmann::json cmd_sweep(const RunConfig& cfg, const std::filesystem::path& out) {
  const Source src = make_source(cfg);
  auto os = open_out(out, "sweep.csv");
  os << "row,a_over_d,a,d,error\n";
  std::vector<double> ratios, errs;
  nlohmann::json rows = nlohmann::json::array();
  for (double v : cfg.sweep.values) {
    GeometrySpec gs = cfg.geometry;
    if (cfg.sweep.parameter == "a_over_d") {
      gs.epsilon = v;
    } else {
      gs.box = {gs.box.x0, gs.box.y0, gs.box.x0 + gs.n * v, gs.box.y0 + gs.n * v};
      gs.epsilon = cfg.sweep.a_coeff * v;
      if (gs.epsilon > gs.eps0) throw ConfigError("a_over_d", "a_coeff d exceeds eps0 for d = " + std::to_string(v));
    }
    const PorousConfig c = gs.build();
    const double err = std::visit(
        [&](const auto& f) { return reflection_oracle_error(f, c, cfg.solver.depth, oracle_options(cfg)); }, src);
    ratios.push_back(c.ratio());
    errs.push_back(err);
    os << "run," << c.ratio() << ',' << c.a << ',' << c.d << ',' << err << '\n';
    rows.push_back({{"a_over_d", c.ratio()}, {"a", c.a}, {"d", c.d}, {"error", err}});
  }
  const auto fit = try_fit(ratios, errs);
  os << "fit,,,," << (fit.is_null() ? std::nan("") : fit["slope"].get<double>()) << '\n';
  bool decreasing = true;
  for (std::size_t i = 1; i < ratios.size(); ++i)
    if ((ratios[i] - ratios[i - 1]) * (errs[i] - errs[i - 1]) <= 0) decreasing = false;
  return {{"rows", rows}, {"fit", fit}, {"monotone_in_a_over_d", decreasing}};
}

inline nlohmann::json cmd_euler(const RunConfig& cfg, const std::filesystem::path& out) {
  const EulerSpec& e = cfg.euler;
  VortexParticles p;
  const bool medium = cfg.has_geometry && cfg.geometry.kind != "none";
  const PorousConfig c = medium ? cfg.geometry.build() : PorousConfig{{}, 0.0, 0.0, cfg.geometry.eps0, Rect{}};
  if (cfg.vorticity.shape == "pair") {
    p = std::get<VortexParticles>(make_source(cfg));
  } else {
    const GridSpec g = GridSpec::covering(*cfg.solver.domain, cfg.solver.h);
    p = discretize_vorticity(vorticity_field(cfg.vorticity, g), e.h_p, e.blob,
                             medium ? std::optional<Rect>(c.kpm_box) : std::nullopt, e.margin);
  }
  nlohmann::json r{{"particles", p.size()}, {"medium", medium}};
  if (medium) {
    ComparisonOptions o;
    o.horizon = e.T;
    o.dt = e.dt;
    o.output_every = e.output_every;
    o.probe = *cfg.analysis.probe;
    o.n_levels = cfg.solver.depth;
    o.full_solve = cfg.solver.full_solve;
    o.margin = e.margin;
    const GridSpec kg = GridSpec::covering(c.kpm_box.inflated(cfg.solver.h), cfg.solver.h);
    std::vector<FlowState> finals;
    const auto recs = run_comparison(p, c, lattice_fraction(c, kg), EffectiveMatrix::disk(), o, &finals);
    auto series = open_out(out, "series.csv");
    write_series_csv(series, recs);
    auto snap = open_out(out, "snapshots.csv");
    write_snapshot_csv(snap, finals[0]);
    auto snap_h = open_out(out, "snapshots_homogenized.csv");
    write_snapshot_csv(snap_h, finals[1]);
    const auto& last = recs.back();
    r["final"] = {{"t", last.t},
                  {"traj_div_max", last.traj_div_max},
                  {"vel_diff_sup_O", last.vel_diff_sup_O},
                  {"smoothed_omega_diff", last.smoothed_omega_diff},
                  {"status", last.status()}};
    r["weights_conserved"] = finals[0].particles.weights == p.weights && finals[1].particles.weights == p.weights;
    return r;
  }

  const Setting free = PerforatedSetting{c, cfg.solver.depth};
  FlowState s = initial_state(p, free, 0.0);
  const int steps = static_cast<int>(std::llround(e.T / e.dt));
  auto snap = open_out(out, "snapshots.csv");
  write_snapshot_csv(snap, s);
  double angle = 0.0, prev = 0.0;
  auto pair_angle = [](const FlowState& st) {
    const Vec2 x = st.particles.positions[1] - st.particles.positions[0];
    return std::atan2(x.y, x.x);
  };
  const bool pair = cfg.vorticity.shape == "pair";
  if (pair) prev = pair_angle(s);
  for (int n = 1; n <= steps; ++n) {
    s = step(s, e.dt, free);
    if (pair) {
      const double a = pair_angle(s);
      angle += std::remainder(a - prev, two_pi);
      prev = a;
    }
    if (n % e.output_every == 0 || n == steps) write_snapshot_csv(snap, s, false);
  }
  r["final_t"] = s.t;
  r["status"] = to_string(s.status);
  r["weights_conserved"] = s.particles.weights == p.weights;
  if (pair && angle != 0.0) {
    const double rho = cfg.vorticity.radius, gamma = cfg.vorticity.amplitude;
    const double analytic = 8 * pi * pi * rho * rho / gamma;
    const double measured = two_pi * s.t / std::abs(angle);
    r["period"] = {{"analytic", analytic},
                   {"measured", measured},
                   {"rel_err", std::abs(measured - analytic) / analytic},
                   {"within_tolerance", std::abs(measured - analytic) / analytic <= 0.02}};
  }
  return r;
}

// --- driver ----------------------------------------------------------------------------

inline nlohmann::json error_json(const std::string& kind, const std::string& message, const std::string& invariant = "") {
  nlohmann::json j{{"schema", summary_schema}, {"status", "error"}, {"kind", kind}, {"message", message}};
  if (!invariant.empty()) j["invariant"] = invariant;
  return j;
}

/// Runs cfg.experiment, writes summary.json into `out`, returns the summary.
inline nlohmann::json run_experiment(const RunConfig& cfg, const std::filesystem::path& out, int threads = 0) {
  std::filesystem::create_directories(out);
  if (threads > 0) omp_set_num_threads(threads);
  nlohmann::json results;
  if (cfg.experiment == "reflect") results = cmd_reflect(cfg, out);
  else if (cfg.experiment == "homog") results = cmd_homog(cfg, out);
  else if (cfg.experiment == "divcurl") results = cmd_divcurl(cfg, out);
  else if (cfg.experiment == "euler") results = cmd_euler(cfg, out);
  else results = cmd_sweep(cfg, out);
  nlohmann::json summary{{"schema", summary_schema},
                         {"status", "ok"},
                         {"experiment", cfg.experiment},
                         {"config_hash", config_hash(cfg)},
                         {"seed", cfg.geometry.seed},
                         {"tolerances", tolerances(cfg)},
                         {"results", results}};
  std::ofstream os(out / "summary.json");
  os << summary.dump(2) << '\n';
  return summary;
}

}  // namespace perfhom
