#pragma once

// Porous-medium configurations: N disjoint disks B(x_l, a) with centres at
// mutual distance >= d, all inside the box K_PM, plus the indicator density
// mu = sum_l 1_{B(x_l, a)} and the lattice volume fraction k.

#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "perfhom/core.hpp"
#include "perfhom/grid.hpp"

namespace perfhom {

struct PorousConfig {
  std::vector<Vec2> centers;
  double a = 0.0;     ///< hole radius
  double d = 0.0;     ///< declared minimum centre distance
  double eps0 = 0.25; ///< smallness parameter, a/d <= eps0 < 1/2
  Rect kpm_box;

  std::size_t size() const { return centers.size(); }
  bool empty() const { return centers.empty(); }
  double ratio() const { return d > 0.0 ? a / d : 0.0; }

  /// Index of the hole whose closed disk contains p, if any.
  std::optional<std::size_t> hole_containing(Vec2 p, double rel_tol = 1e-12) const {
    const double r2 = a * a * (1.0 - rel_tol);
    for (std::size_t l = 0; l < centers.size(); ++l)
      if (norm2(p - centers[l]) < r2) return l;
    return std::nullopt;
  }
  /// Minimum over holes of |p - x_l| - a (negative inside a hole).
  double clearance(Vec2 p) const {
    double m = std::numeric_limits<double>::infinity();
    for (Vec2 c : centers) m = std::min(m, norm(p - c) - a);
    return m;
  }
};

/// Volume fraction k on a grid together with the smallness bound it is
/// checked against (||k||_inf <= eps0^2, supp k inside K_PM).
struct VolumeFraction {
  ScalarGridField field;
  double eps0 = 0.25;

  double sup_norm() const { return field.sup_norm(); }
};

// --- construction ----------------------------------------------------------

/// n x n orthogonal lattice in `box`: spacing d = min(w, h)/n, radius
/// a = epsilon * d (for the unit square a = epsilon / sqrt(N)).
inline PorousConfig build_lattice(int n_per_side, double epsilon, const Rect& box, double eps0 = 0.25) {
  if (n_per_side < 1) throw InvalidArgument("build_lattice: n_per_side must be >= 1");
  if (!(epsilon > 0.0) || !(2.0 * epsilon < 1.0)) throw InvalidArgument("build_lattice: need 0 < epsilon < 1/2");
  if (!box.valid()) throw InvalidArgument("build_lattice: invalid box");
  if (!(eps0 < 0.5)) throw InvalidArgument("build_lattice: eps0 must be < 1/2");
  const double dx = box.width() / n_per_side, dy = box.height() / n_per_side;
  PorousConfig c;
  c.d = std::min(dx, dy);
  c.a = epsilon * c.d;
  c.eps0 = eps0;
  c.kpm_box = box;
  if (c.a / c.d > eps0 * (1.0 + 1e-12))
    throw InvalidArgument("build_lattice: a/d = " + std::to_string(c.a / c.d) + " exceeds eps0");
  c.centers.reserve(static_cast<std::size_t>(n_per_side) * n_per_side);
  for (int i = 0; i < n_per_side; ++i)
    for (int j = 0; j < n_per_side; ++j)
      c.centers.push_back({box.x0 + (i + 0.5) * dx, box.y0 + (j + 0.5) * dy});
  return c;
}

/// One hole. The centre-distance d has no natural value here; it is set to
/// the diameter of the box so that a/d stays finite and small.
inline PorousConfig single_hole(Vec2 center, double a, const Rect& box, double eps0 = 0.25) {
  PorousConfig c;
  c.centers = {center};
  c.a = a;
  c.d = box.diameter();
  c.eps0 = eps0;
  c.kpm_box = box;
  return c;
}

/// Rejection sampling of N centres uniform in the box (shrunk by a) with
/// pairwise distance >= d. Throws after 1e5 failed attempts for one point.
inline PorousConfig build_random(std::size_t n, double a, double d, const Rect& box, double eps0, std::uint64_t seed,
                                 int max_attempts = 100000) {
  if (!(a > 0.0) || !(d > 0.0) || !box.valid()) throw InvalidArgument("build_random: need a, d > 0, valid box");
  if (a / d > eps0 || !(eps0 < 0.5)) throw InvalidArgument("build_random: need a/d <= eps0 < 1/2");
  const Rect inner{box.x0 + a, box.y0 + a, box.x1 - a, box.y1 - a};
  if (!inner.valid()) throw InvalidArgument("build_random: box too small for radius a");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(inner.x0, inner.x1), uy(inner.y0, inner.y1);
  PorousConfig c;
  c.a = a;
  c.d = n == 1 ? box.diameter() : d;
  c.eps0 = eps0;
  c.kpm_box = box;
  while (c.centers.size() < n) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      const Vec2 p{ux(rng), uy(rng)};
      bool ok = true;
      for (Vec2 q : c.centers)
        if (norm2(p - q) < d * d) { ok = false; break; }
      if (ok) { c.centers.push_back(p); placed = true; }
    }
    if (!placed)
      throw NumericFailure("build_random: rejection cap reached after " + std::to_string(c.centers.size()) +
                           " centres");
  }
  return c;
}

// --- validation --------------------------------------------------------------

struct ValidationReport {
  double min_distance = std::numeric_limits<double>::infinity();
  double a_over_d = 0.0;
  bool min_distance_ok = true;  ///< pairwise centre distance >= d
  bool ratio_ok = true;         ///< a/d <= eps0
  bool eps0_ok = true;          ///< eps0 < 1/2
  bool containment_ok = true;   ///< every disk inside K_PM
  std::vector<std::string> violations;

  bool passed() const { return violations.empty(); }
};

inline ValidationReport validate(const PorousConfig& c) {
  ValidationReport r;
  for (std::size_t l = 0; l < c.centers.size(); ++l)
    for (std::size_t p = l + 1; p < c.centers.size(); ++p)
      r.min_distance = std::min(r.min_distance, norm(c.centers[l] - c.centers[p]));
  r.a_over_d = c.ratio();
  r.min_distance_ok = c.centers.size() < 2 || r.min_distance >= c.d * (1.0 - 1e-12);
  r.ratio_ok = r.a_over_d <= c.eps0 * (1.0 + 1e-12) && c.d > 0.0;
  r.eps0_ok = c.eps0 > 0.0 && c.eps0 < 0.5;
  for (Vec2 x : c.centers)
    if (!c.kpm_box.contains_disk(x, c.a)) r.containment_ok = false;
  if (!r.min_distance_ok) r.violations.emplace_back("min_distance");
  if (!r.ratio_ok) r.violations.emplace_back("a_over_d");
  if (!r.eps0_ok) r.violations.emplace_back("eps0");
  if (!r.containment_ok) r.violations.emplace_back("containment");
  return r;
}

// --- densities ---------------------------------------------------------------

/// Continuum limit of a lattice: constant N pi a^2 / |K_PM| on the box (cells
/// cut by the box boundary get the covered fraction), zero elsewhere.
inline VolumeFraction lattice_fraction(const PorousConfig& c, const GridSpec& g) {
  const Rect& b = c.kpm_box;
  const double value = static_cast<double>(c.size()) * pi * c.a * c.a / b.area();
  VolumeFraction k{ScalarGridField(g), c.eps0};
  if (value == 0.0) return k;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Rect cell = g.cell(i, j);
      const double ox = std::max(0.0, std::min(cell.x1, b.x1) - std::max(cell.x0, b.x0));
      const double oy = std::max(0.0, std::min(cell.y1, b.y1) - std::max(cell.y0, b.y0));
      k.field(i, j) = value * ox * oy / cell.area();
    }
  return k;
}

/// mu = sum_l 1_{B(x_l, a)} as exact-ish cell area fractions (subcell
/// sampling). Requires h <= a/4 so every disk spans several cells.
inline ScalarGridField rasterize_mu(const PorousConfig& c, const GridSpec& g, int subsamples = 16) {
  ScalarGridField mu(g);
  if (c.empty()) return mu;
  if (g.h > c.a / 4.0)
    throw InvalidArgument("rasterize_mu: grid spacing " + std::to_string(g.h) + " exceeds a/4 = " +
                          std::to_string(c.a / 4.0));
  for (Vec2 x : c.centers) {
    const int i0 = std::max(0, static_cast<int>(std::floor((x.x - c.a - g.origin.x) / g.h)));
    const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((x.x + c.a - g.origin.x) / g.h)));
    const int j0 = std::max(0, static_cast<int>(std::floor((x.y - c.a - g.origin.y) / g.h)));
    const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((x.y + c.a - g.origin.y) / g.h)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) mu(i, j) = std::min(1.0, mu(i, j) + disk_cell_fraction(g.cell(i, j), x, c.a, subsamples));
  }
  return mu;
}

/// Cells lying entirely outside every hole (the fluid mask used for norms).
inline std::vector<bool> fluid_mask(const PorousConfig& c, const GridSpec& g) {
  std::vector<bool> mask(g.size(), true);
  for (Vec2 x : c.centers) {
    const int i0 = std::max(0, static_cast<int>(std::floor((x.x - c.a - g.origin.x) / g.h)));
    const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((x.x + c.a - g.origin.x) / g.h)));
    const int j0 = std::max(0, static_cast<int>(std::floor((x.y - c.a - g.origin.y) / g.h)));
    const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((x.y + c.a - g.origin.y) / g.h)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        if (g.cell(i, j).distance(x) < c.a) mask[g.index(i, j)] = false;
  }
  return mask;
}

// --- serialization -------------------------------------------------------------

/// Geometry block of a run file. Keys: geometry.kind (lattice, two_hole,
/// single, random, none), lattice.n, lattice.epsilon, geometry.a,
/// geometry.d, geometry.count, box.x0 ... box.y1, eps0, seed.
struct GeometrySpec {
  std::string kind = "lattice";
  int n = 1;
  double epsilon = 0.1;
  double a = 0.0;          ///< radius for two_hole, single, random
  double d = 0.0;          ///< centre distance for two_hole, random
  std::size_t count = 0;   ///< random only
  Rect box{0.0, 0.0, 1.0, 1.0};
  double eps0 = 0.25;
  std::uint64_t seed = 1;

  /// two_hole: centres at the box centre -+ d/2 along x.
  PorousConfig build() const {
    if (kind == "lattice") return build_lattice(n, epsilon, box, eps0);
    if (kind == "single") return single_hole(box.center(), a, box, eps0);
    if (kind == "random") return build_random(count, a, d, box, eps0, seed);
    if (kind == "none") return PorousConfig{{}, 0.0, 0.0, eps0, box};
    if (kind == "two_hole") {
      PorousConfig c;
      c.a = a;
      c.d = d;
      c.eps0 = eps0;
      c.kpm_box = box;
      c.centers = {box.center() - Vec2{0.5 * d, 0.0}, box.center() + Vec2{0.5 * d, 0.0}};
      return c;
    }
    throw InvalidArgument("unknown geometry kind '" + kind + "'");
  }
  friend bool operator==(const GeometrySpec&, const GeometrySpec&) = default;
};

/// Missing keys keep their defaults; malformed values throw ptree_bad_data.
inline GeometrySpec geometry_from_ptree(const boost::property_tree::ptree& pt) {
  auto get = [&pt]<class T>(const char* key, T fallback) {
    return pt.get_optional<std::string>(key) ? pt.get<T>(key) : fallback;
  };
  GeometrySpec s;
  s.kind = get("geometry.kind", s.kind);
  s.n = get("lattice.n", s.n);
  s.epsilon = get("lattice.epsilon", s.epsilon);
  s.a = get("geometry.a", s.a);
  s.d = get("geometry.d", s.d);
  s.count = get("geometry.count", s.count);
  s.box.x0 = get("box.x0", s.box.x0);
  s.box.y0 = get("box.y0", s.box.y0);
  s.box.x1 = get("box.x1", s.box.x1);
  s.box.y1 = get("box.y1", s.box.y1);
  s.eps0 = get("eps0", s.eps0);
  s.seed = get("seed", s.seed);
  return s;
}

inline void geometry_to_ptree(const GeometrySpec& s, boost::property_tree::ptree& pt) {
  pt.put("eps0", s.eps0);
  pt.put("seed", s.seed);
  pt.put("geometry.kind", s.kind);
  pt.put("geometry.a", s.a);
  pt.put("geometry.d", s.d);
  pt.put("geometry.count", s.count);
  pt.put("lattice.n", s.n);
  pt.put("lattice.epsilon", s.epsilon);
  pt.put("box.x0", s.box.x0);
  pt.put("box.y0", s.box.y0);
  pt.put("box.x1", s.box.x1);
  pt.put("box.y1", s.box.y1);
}

inline GeometrySpec read_geometry(std::istream& is) {
  boost::property_tree::ptree pt;
  boost::property_tree::ini_parser::read_ini(is, pt);
  return geometry_from_ptree(pt);
}

inline void write_geometry(std::ostream& os, const GeometrySpec& s) {
  boost::property_tree::ptree pt;
  geometry_to_ptree(s, pt);
  boost::property_tree::ini_parser::write_ini(os, pt);
}

inline void write_centers_csv(std::ostream& os, const std::vector<Vec2>& centers) {
  os << std::setprecision(17) << "x,y\n";
  for (Vec2 c : centers) os << c.x << ',' << c.y << '\n';
}

inline std::vector<Vec2> read_centers_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y", 0) != 0) throw InvalidArgument("read_centers_csv: expected header x,y");
  std::vector<Vec2> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidArgument("read_centers_csv: malformed row '" + line + "'");
    out.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return out;
}

}  // namespace perfhom
