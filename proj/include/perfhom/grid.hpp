#pragma once

// Uniform cell-centred Cartesian grids and the scalar / vector fields that
// live on them. Cell (i, j) covers [x0 + i h, x0 + (i+1) h] x [y0 + j h, ...]
// and its sample sits at the cell centre. Storage is row-major in j.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "perfhom/core.hpp"

namespace perfhom {

struct GridSpec {
  Vec2 origin;  ///< lower-left corner of cell (0, 0)
  double h = 0.0;
  int nx = 0;
  int ny = 0;

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  Vec2 center(int i, int j) const { return {origin.x + (i + 0.5) * h, origin.y + (j + 0.5) * h}; }
  Rect cell(int i, int j) const {
    return {origin.x + i * h, origin.y + j * h, origin.x + (i + 1) * h, origin.y + (j + 1) * h};
  }
  Rect extent() const { return {origin.x, origin.y, origin.x + nx * h, origin.y + ny * h}; }
  double cell_area() const { return h * h; }
  bool valid() const { return h > 0.0 && nx > 0 && ny > 0 && std::isfinite(h); }

  /// Index of the cell containing p, or nullopt when p is outside the grid.
  std::optional<std::pair<int, int>> locate(Vec2 p) const {
    const double fx = (p.x - origin.x) / h;
    const double fy = (p.y - origin.y) / h;
    if (!(fx >= 0.0 && fy >= 0.0 && fx <= nx && fy <= ny)) return std::nullopt;
    return std::pair{std::min(static_cast<int>(fx), nx - 1), std::min(static_cast<int>(fy), ny - 1)};
  }

  /// Grid of spacing h whose extent covers `box` (cells snapped outward).
  static GridSpec covering(const Rect& box, double h) {
    if (!(h > 0.0) || !box.valid()) throw InvalidArgument("GridSpec::covering: need h > 0 and a valid box");
    GridSpec g;
    g.h = h;
    g.origin = {box.x0, box.y0};
    g.nx = static_cast<int>(std::ceil(box.width() / h - 1e-9));
    g.ny = static_cast<int>(std::ceil(box.height() / h - 1e-9));
    return g;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct ScalarGridField {
  GridSpec grid;
  std::vector<double> values;

  ScalarGridField() = default;
  explicit ScalarGridField(const GridSpec& g, double fill = 0.0) : grid(g), values(g.size(), fill) {
    if (!g.valid()) throw InvalidArgument("ScalarGridField: invalid grid (need h > 0, nx, ny > 0)");
  }

  double& operator()(int i, int j) { return values[grid.index(i, j)]; }
  double operator()(int i, int j) const { return values[grid.index(i, j)]; }

  double sup_norm() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  double l1_norm() const {
    double s = 0.0;
    for (double v : values) s += std::abs(v);
    return s * grid.cell_area();
  }
  double integral() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_area();
  }
  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool is_zero() const {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }

  /// Bounding rectangle of the cells with nonzero value; nullopt when empty.
  std::optional<Rect> support_box() const {
    int i0 = grid.nx, i1 = -1, j0 = grid.ny, j1 = -1;
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i)
        if ((*this)(i, j) != 0.0) {
          i0 = std::min(i0, i); i1 = std::max(i1, i);
          j0 = std::min(j0, j); j1 = std::max(j1, j);
        }
    if (i1 < 0) return std::nullopt;
    const Rect a = grid.cell(i0, j0), b = grid.cell(i1, j1);
    return Rect{a.x0, a.y0, b.x1, b.y1};
  }

  /// True when some nonzero cell sits on the outermost ring of the grid.
  bool touches_edge() const {
    for (int i = 0; i < grid.nx; ++i)
      if ((*this)(i, 0) != 0.0 || (*this)(i, grid.ny - 1) != 0.0) return true;
    for (int j = 0; j < grid.ny; ++j)
      if ((*this)(0, j) != 0.0 || (*this)(grid.nx - 1, j) != 0.0) return true;
    return false;
  }

  /// Piecewise-constant lookup (value of the containing cell, 0 off-grid).
  double cell_value(Vec2 p) const {
    const auto c = grid.locate(p);
    return c ? (*this)(c->first, c->second) : 0.0;
  }
};

struct VectorGridField {
  GridSpec grid;
  std::vector<Vec2> values;

  VectorGridField() = default;
  explicit VectorGridField(const GridSpec& g) : grid(g), values(g.size()) {
    if (!g.valid()) throw InvalidArgument("VectorGridField: invalid grid");
  }

  Vec2& operator()(int i, int j) { return values[grid.index(i, j)]; }
  Vec2 operator()(int i, int j) const { return values[grid.index(i, j)]; }

  double l2_norm() const {
    double s = 0.0;
    for (Vec2 v : values) s += norm2(v);
    return std::sqrt(s * grid.cell_area());
  }
  double lp_norm(double p) const {
    double s = 0.0;
    for (Vec2 v : values) s += std::pow(norm(v), p);
    return std::pow(s * grid.cell_area(), 1.0 / p);
  }
  double sup_norm() const {
    double m = 0.0;
    for (Vec2 v : values) m = std::max(m, norm(v));
    return m;
  }

  friend VectorGridField operator-(const VectorGridField& a, const VectorGridField& b) {
    if (!(a.grid == b.grid)) throw InvalidArgument("VectorGridField: grid mismatch");
    VectorGridField r(a.grid);
    for (std::size_t n = 0; n < a.values.size(); ++n) r.values[n] = a.values[n] - b.values[n];
    return r;
  }
};

/// Bilinear interpolation of cell-centre samples. Only points whose four
/// surrounding centres exist are accepted.
inline Vec2 interpolate_bilinear(const VectorGridField& f, Vec2 p) {
  const GridSpec& g = f.grid;
  const double fx = (p.x - g.origin.x) / g.h - 0.5;
  const double fy = (p.y - g.origin.y) / g.h - 0.5;
  if (!(fx >= 0.0 && fy >= 0.0 && fx <= g.nx - 1 && fy <= g.ny - 1))
    throw DomainError("interpolate_bilinear: point outside the grid interior");
  const int i = std::min(static_cast<int>(fx), g.nx - 2);
  const int j = std::min(static_cast<int>(fy), g.ny - 2);
  const double tx = fx - i, ty = fy - j;
  return (1 - tx) * (1 - ty) * f(i, j) + tx * (1 - ty) * f(i + 1, j) + (1 - tx) * ty * f(i, j + 1) +
         tx * ty * f(i + 1, j + 1);
}

/// Cell values = average of `fn` over an s x s subgrid of sample points.
template <class Fn>
ScalarGridField rasterize_function(const GridSpec& g, Fn&& fn, int subsamples = 1) {
  ScalarGridField out(g);
  const double sh = g.h / subsamples;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Rect c = g.cell(i, j);
      double s = 0.0;
      for (int b = 0; b < subsamples; ++b)
        for (int a = 0; a < subsamples; ++a) s += fn(Vec2{c.x0 + (a + 0.5) * sh, c.y0 + (b + 0.5) * sh});
      out(i, j) = s / (subsamples * subsamples);
    }
  return out;
}

/// Area fraction of a cell covered by the disk B(c, r), estimated by
/// s x s subcell sampling. Cells clearly inside or outside are exact.
inline double disk_cell_fraction(const Rect& cell, Vec2 c, double r, int s) {
  const double dmin = cell.distance(c);
  if (dmin >= r) return 0.0;
  const double fx = std::max(std::abs(cell.x0 - c.x), std::abs(cell.x1 - c.x));
  const double fy = std::max(std::abs(cell.y0 - c.y), std::abs(cell.y1 - c.y));
  if (fx * fx + fy * fy <= r * r) return 1.0;
  const double sw = cell.width() / s, sh = cell.height() / s;
  int inside = 0;
  for (int b = 0; b < s; ++b)
    for (int a = 0; a < s; ++a) {
      const Vec2 p{cell.x0 + (a + 0.5) * sw, cell.y0 + (b + 0.5) * sh};
      if (norm2(p - c) < r * r) ++inside;
    }
  return static_cast<double>(inside) / (s * s);
}

/// amplitude * 1_{B(c, r)} with cell values equal to covered area fractions.
inline ScalarGridField rasterize_disk(const GridSpec& g, Vec2 c, double r, double amplitude, int subsamples = 16) {
  ScalarGridField out(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) out(i, j) = amplitude * disk_cell_fraction(g.cell(i, j), c, r, subsamples);
  return out;
}

/// Smooth compactly supported bump amplitude * (1 - |x-c|^2/r^2)^power.
inline double bump_value(Vec2 x, Vec2 c, double r, double amplitude, int power = 4) {
  const double s = 1.0 - norm2(x - c) / (r * r);
  return s > 0.0 ? amplitude * std::pow(s, power) : 0.0;
}

inline ScalarGridField rasterize_bump(const GridSpec& g, Vec2 c, double r, double amplitude, int power = 4) {
  return rasterize_function(g, [&](Vec2 x) { return bump_value(x, c, r, amplitude, power); });
}

// --- serialization -------------------------------------------------------
//
// CSV layout: a header line "origin_x,origin_y,h,nx,ny", one line with those
// five numbers, then ny lines of nx comma-separated values (row j = 0 first).

inline void write_csv(std::ostream& os, const ScalarGridField& f) {
  os << std::setprecision(17);
  os << "origin_x,origin_y,h,nx,ny\n";
  os << f.grid.origin.x << ',' << f.grid.origin.y << ',' << f.grid.h << ',' << f.grid.nx << ',' << f.grid.ny << '\n';
  for (int j = 0; j < f.grid.ny; ++j) {
    for (int i = 0; i < f.grid.nx; ++i) os << (i ? "," : "") << f(i, j);
    os << '\n';
  }
}

inline ScalarGridField read_scalar_csv(std::istream& is) {
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
  };
  if (!std::getline(is, line)) throw InvalidArgument("read_scalar_csv: missing header");
  if (!std::getline(is, line)) throw InvalidArgument("read_scalar_csv: missing grid line");
  const auto head = split(line);
  if (head.size() != 5) throw InvalidArgument("read_scalar_csv: grid line needs 5 fields");
  GridSpec g{{std::stod(head[0]), std::stod(head[1])}, std::stod(head[2]), std::stoi(head[3]), std::stoi(head[4])};
  ScalarGridField f(g);
  for (int j = 0; j < g.ny; ++j) {
    if (!std::getline(is, line)) throw InvalidArgument("read_scalar_csv: truncated values");
    const auto row = split(line);
    if (static_cast<int>(row.size()) != g.nx) throw InvalidArgument("read_scalar_csv: wrong row length");
    for (int i = 0; i < g.nx; ++i) f(i, j) = std::stod(row[static_cast<std::size_t>(i)]);
  }
  return f;
}

/// Vector fields share the two header lines, followed by one "i,j,x,y,vx,vy"
/// row per cell.
inline void write_csv(std::ostream& os, const VectorGridField& f) {
  os << std::setprecision(17);
  os << "origin_x,origin_y,h,nx,ny\n";
  os << f.grid.origin.x << ',' << f.grid.origin.y << ',' << f.grid.h << ',' << f.grid.nx << ',' << f.grid.ny << '\n';
  os << "i,j,x,y,vx,vy\n";
  for (int j = 0; j < f.grid.ny; ++j)
    for (int i = 0; i < f.grid.nx; ++i) {
      const Vec2 c = f.grid.center(i, j);
      os << i << ',' << j << ',' << c.x << ',' << c.y << ',' << f(i, j).x << ',' << f(i, j).y << '\n';
    }
}

inline nlohmann::json to_json(const GridSpec& g) {
  return {{"origin", {g.origin.x, g.origin.y}}, {"h", g.h}, {"nx", g.nx}, {"ny", g.ny}};
}

inline nlohmann::json describe(const ScalarGridField& f) {
  nlohmann::json j = to_json(f.grid);
  j["integral"] = f.integral();
  j["sup"] = f.sup_norm();
  if (auto s = f.support_box()) j["support"] = {s->x0, s->y0, s->x1, s->y1};
  return j;
}

}  // namespace perfhom
