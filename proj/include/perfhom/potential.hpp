#pragma once

// Free-space potential theory in the plane.
//
//   psi_0(x)      = (1/2pi) \int ln|x - y| f(y) dy
//   grad psi_0(x) = (1/2pi) \int (x - y)/|x - y|^2 f(y) dy
//
// evaluated from cell data (midpoint rule, exact rectangle integrals for the
// 3x3 block of cells around the target) or from regularized vortex
// particles, together with the single-disk reflection V^a[A] (a dipole).

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/fft.hpp"
#include "perfhom/grid.hpp"

namespace perfhom {

// --- exact rectangle integrals ---------------------------------------------------
//
// Antiderivatives F with d^2F/du dv equal to the integrand. The integral over
// [u0,u1] x [v0,v1] is F(u1,v1) - F(u0,v1) - F(u1,v0) + F(u0,v0).

namespace detail {

inline double xlogr2(double x, double r2) { return x == 0.0 ? 0.0 : x * std::log(r2); }
inline double x2atan(double x, double y) { return x == 0.0 ? 0.0 : x * x * std::atan(y / x); }
inline double xatan(double x, double y) { return x == 0.0 ? 0.0 : x * std::atan(y / x); }

/// d^2/du dv = (1/2) ln(u^2 + v^2)
inline double log_antiderivative(double u, double v) {
  const double r2 = u * u + v * v;
  if (r2 == 0.0) return 0.0;
  return 0.5 * (xlogr2(u * v, r2) - 3.0 * u * v + x2atan(u, v) + x2atan(v, u));
}
/// d^2/du dv = u / (u^2 + v^2)
inline double kernel_x_antiderivative(double u, double v) {
  const double r2 = u * u + v * v;
  if (r2 == 0.0) return 0.0;
  return 0.5 * (xlogr2(v, r2) - 2.0 * v) + xatan(u, v);
}

template <class F>
double corner_sum(F&& fn, double u0, double u1, double v0, double v1) {
  return fn(u1, v1) - fn(u0, v1) - fn(u1, v0) + fn(u0, v0);
}

}  // namespace detail

/// \int_cell ln|x - y| dy
inline double cell_log_integral(Vec2 x, const Rect& cell) {
  return detail::corner_sum(detail::log_antiderivative, x.x - cell.x1, x.x - cell.x0, x.y - cell.y1, x.y - cell.y0);
}

/// \int_cell (x - y)/|x - y|^2 dy
inline Vec2 cell_kernel_integral(Vec2 x, const Rect& cell) {
  const double u0 = x.x - cell.x1, u1 = x.x - cell.x0, v0 = x.y - cell.y1, v1 = x.y - cell.y0;
  const double gx = detail::corner_sum(detail::kernel_x_antiderivative, u0, u1, v0, v1);
  const double gy = detail::corner_sum([](double u, double v) { return detail::kernel_x_antiderivative(v, u); }, u0,
                                       u1, v0, v1);
  return {gx, gy};
}

// --- sources -------------------------------------------------------------------------

/// Grid vorticity with its nonzero cells extracted once for fast sums.
class GridVorticity {
 public:
  GridVorticity() = default;
  explicit GridVorticity(ScalarGridField f) : field_(std::move(f)) {
    if (!field_.all_finite()) throw InvalidArgument("GridVorticity: non-finite samples");
    const GridSpec& g = field_.grid;
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (const double v = field_(i, j); v != 0.0) cells_.push_back({g.center(i, j), v, i, j});
  }

  struct Cell {
    Vec2 center;
    double value;
    int i, j;
  };

  const ScalarGridField& field() const { return field_; }
  const GridSpec& grid() const { return field_.grid; }
  const std::vector<Cell>& cells() const { return cells_; }
  double mass() const { return field_.integral(); }

 private:
  ScalarGridField field_;
  std::vector<Cell> cells_;
};

namespace detail {
/// Cells with centre within 1.5 h of x in both directions get exact integrals.
inline bool near_cell(Vec2 x, Vec2 c, double h) {
  return std::abs(x.x - c.x) < 1.5 * h && std::abs(x.y - c.y) < 1.5 * h;
}
}  // namespace detail

inline double psi0_eval(const GridVorticity& f, Vec2 x) {
  const double h = f.grid().h, area = h * h;
  double far = 0.0, near = 0.0;
  for (const auto& c : f.cells()) {
    if (detail::near_cell(x, c.center, h)) {
      near += c.value * cell_log_integral(x, f.grid().cell(c.i, c.j));
    } else {
      far += c.value * std::log(norm2(x - c.center));
    }
  }
  return (0.5 * far * area + near) / two_pi;
}

inline Vec2 grad_psi0_eval(const GridVorticity& f, Vec2 x) {
  const double h = f.grid().h, area = h * h;
  Vec2 far, near;
  for (const auto& c : f.cells()) {
    if (detail::near_cell(x, c.center, h)) {
      near += c.value * cell_kernel_integral(x, f.grid().cell(c.i, c.j));
    } else {
      const Vec2 z = x - c.center;
      far += (c.value / norm2(z)) * z;
    }
  }
  return (area * far + near) / two_pi;
}

inline double source_mass(const GridVorticity& f) { return f.mass(); }

/// True when a nonzero cell overlaps the open disk B(c, r).
inline bool support_meets_disk(const GridVorticity& f, Vec2 c, double r) {
  for (const auto& cell : f.cells())
    if (f.grid().cell(cell.i, cell.j).distance(c) < r) return true;
  return false;
}

inline double psi0_eval(const ScalarGridField& f, Vec2 x) { return psi0_eval(GridVorticity(f), x); }
inline Vec2 grad_psi0_eval(const ScalarGridField& f, Vec2 x) { return grad_psi0_eval(GridVorticity(f), x); }

/// Lagrangian vorticity: point circulations w_i at x_i, regularized with the
/// algebraic blob of radius `blob` (velocity kernel z^perp / 2pi(|z|^2 + blob^2)).
struct VortexParticles {
  std::vector<Vec2> positions;
  std::vector<double> weights;
  double blob = 0.0;
  double omega_max = 0.0;  ///< sup-norm of the vorticity the particles discretize

  std::size_t size() const { return positions.size(); }
  double total_weight() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
  double total_abs_weight() const {
    double s = 0.0;
    for (double w : weights) s += std::abs(w);
    return s;
  }
};

inline double psi0_eval(const VortexParticles& p, Vec2 x) {
  const double d2 = p.blob * p.blob;
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p.weights[i] * std::log(norm2(x - p.positions[i]) + d2);
  return s / (2.0 * two_pi);
}

inline Vec2 grad_psi0_eval(const VortexParticles& p, Vec2 x) {
  const double d2 = p.blob * p.blob;
  Vec2 s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2 z = x - p.positions[i];
    s += (p.weights[i] / (norm2(z) + d2)) * z;
  }
  return s / two_pi;
}

inline double source_mass(const VortexParticles& p) { return p.total_weight(); }

inline bool support_meets_disk(const VortexParticles& p, Vec2 c, double r) {
  for (Vec2 x : p.positions)
    if (norm2(x - c) < r * r) return true;
  return false;
}

/// Harmonic base field psi(x) = A.x + c. Stands in for a far-away source
/// whose gradient is constant across a hole (used to validate solvers).
struct LinearPotential {
  Vec2 gradient;
  double offset = 0.0;
};
inline double psi0_eval(const LinearPotential& p, Vec2 x) { return dot(p.gradient, x) + p.offset; }
inline Vec2 grad_psi0_eval(const LinearPotential& p, Vec2) { return p.gradient; }
inline double source_mass(const LinearPotential&) { return 0.0; }
inline bool support_meets_disk(const LinearPotential&, Vec2, double) { return false; }

/// Anything that can produce psi_0 and its gradient pointwise.
template <class S>
concept VorticitySource = requires(const S& s, Vec2 x, double r) {
  { psi0_eval(s, x) } -> std::convertible_to<double>;
  { grad_psi0_eval(s, x) } -> std::convertible_to<Vec2>;
  { source_mass(s) } -> std::convertible_to<double>;
  { support_meets_disk(s, x, r) } -> std::convertible_to<bool>;
};

static_assert(VorticitySource<GridVorticity>);
static_assert(VorticitySource<VortexParticles>);
static_assert(VorticitySource<LinearPotential>);

// --- grid-to-grid gradient -------------------------------------------------------------

/// grad psi_0 at every cell centre of f's grid, as one free-space FFT
/// convolution (zero padding, Hockney). Matches grad_psi0_eval at centres.
inline VectorGridField grad_psi0_grid(const ScalarGridField& f) {
  const GridSpec& g = f.grid;
  const int mx = odd_fft_size(2 * g.nx - 1), my = odd_fft_size(2 * g.ny - 1);
  const double h = g.h, area = h * h;
  const Vec2 c0 = g.center(0, 0);
  RealFft2d fk(mx, my), ff(mx, my);
  auto kernel_at = [&](int di, int dj) -> Vec2 {
    if (std::abs(di) <= 1 && std::abs(dj) <= 1) {
      const Vec2 x = c0;
      const Rect cell{c0.x - (di + 0.5) * h, c0.y - (dj + 0.5) * h, c0.x - (di - 0.5) * h, c0.y - (dj - 0.5) * h};
      return cell_kernel_integral(x, cell) / two_pi;
    }
    const Vec2 z{di * h, dj * h};
    return (area / (two_pi * norm2(z))) * z;
  };
  VectorGridField out(g);
  std::vector<std::complex<double>> src_hat(ff.spectrum_size());
  std::fill(ff.real().begin(), ff.real().end(), 0.0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) ff.real()[static_cast<std::size_t>(j) * mx + i] = f(i, j);
  ff.forward();
  std::copy(ff.spectrum().begin(), ff.spectrum().end(), src_hat.begin());
  for (int comp = 0; comp < 2; ++comp) {
    auto kr = fk.real();
    std::fill(kr.begin(), kr.end(), 0.0);
    for (int dj = -(g.ny - 1); dj <= g.ny - 1; ++dj)
      for (int di = -(g.nx - 1); di <= g.nx - 1; ++di) {
        const Vec2 kv = kernel_at(di, dj);
        const int ii = (di + mx) % mx, jj = (dj + my) % my;
        kr[static_cast<std::size_t>(jj) * mx + ii] = comp == 0 ? kv.x : kv.y;
      }
    fk.forward();
    auto ks = fk.spectrum();
    for (std::size_t n = 0; n < ks.size(); ++n) ks[n] *= src_hat[n];
    fk.backward();
    const double scale = 1.0 / (static_cast<double>(mx) * my);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double v = fk.real()[static_cast<std::size_t>(j) * mx + i] * scale;
        (comp == 0 ? out(i, j).x : out(i, j).y) = v;
      }
  }
  return out;
}

// --- single-disk reflection ------------------------------------------------------------

/// V^a[A](. - center): the harmonic function outside B(center, a) equal to
/// A.(x - center) on the circle and vanishing at infinity.
struct DipoleSpec {
  Vec2 center;
  double a = 0.0;
  Vec2 A;
};

namespace detail {
inline Vec2 checked_offset(const DipoleSpec& s, Vec2 x) {
  const Vec2 z = x - s.center;
  if (norm2(z) < s.a * s.a * (1.0 - 1e-12)) throw DomainError("dipole evaluated inside its hole");
  return z;
}
}  // namespace detail

/// a^2 A.z / |z|^2
inline double dipole_eval(const DipoleSpec& s, Vec2 x) {
  const Vec2 z = detail::checked_offset(s, x);
  return s.a * s.a * dot(s.A, z) / norm2(z);
}

/// a^2 [A/|z|^2 - 2 (A.z) z/|z|^4]
inline Vec2 dipole_grad(const DipoleSpec& s, Vec2 x) {
  const Vec2 z = detail::checked_offset(s, x);
  const double r2 = norm2(z);
  return (s.a * s.a / r2) * (s.A - (2.0 * dot(s.A, z) / r2) * z);
}

// Unchecked versions for inner loops whose callers already guarantee |z| >= a.
inline double dipole_value_unchecked(Vec2 z, double a2, Vec2 A) { return a2 * dot(A, z) / norm2(z); }
inline Vec2 dipole_grad_unchecked(Vec2 z, double a2, Vec2 A) {
  const double r2 = norm2(z);
  return (a2 / r2) * (A - (2.0 * dot(A, z) / r2) * z);
}

// --- diagnostics ---------------------------------------------------------------------------

struct Psi0BoundsReport {
  double sup_grad = 0.0;         ///< sampled sup |grad psi_0| over f's grid cell centres
  double bound = 0.0;            ///< ||f||_1^{1/2} ||f||_inf^{1/2} (reference constant 1)
  double sup_ratio = 0.0;        ///< sup_grad / bound (0 when bound is 0)
  double log_lipschitz_ratio = 0.0;  ///< max |grad psi_0(x) - grad psi_0(y)| / ((||f||_1+||f||_inf) h(|x-y|))
  int pairs = 0;
};

/// h(r) = r max(-ln r, 1)
inline double log_lipschitz_modulus(double r) { return r * std::max(-std::log(r), 1.0); }

inline Psi0BoundsReport psi0_bounds_check(const ScalarGridField& f, int pairs = 1000, std::uint64_t seed = 7) {
  Psi0BoundsReport r;
  r.pairs = pairs;
  const double l1 = f.l1_norm(), linf = f.sup_norm();
  if (l1 == 0.0) return r;
  r.bound = std::sqrt(l1 * linf);
  const VectorGridField g = grad_psi0_grid(f);
  r.sup_grad = g.sup_norm();
  r.sup_ratio = r.sup_grad / r.bound;
  const GridVorticity src(f);
  const Rect ext = f.grid.extent();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(ext.x0, ext.x1), uy(ext.y0, ext.y1);
  for (int n = 0; n < pairs; ++n) {
    const Vec2 x{ux(rng), uy(rng)}, y{ux(rng), uy(rng)};
    const double dist = norm(x - y);
    if (dist == 0.0) continue;
    const double diff = norm(grad_psi0_eval(src, x) - grad_psi0_eval(src, y));
    r.log_lipschitz_ratio = std::max(r.log_lipschitz_ratio, diff / ((l1 + linf) * log_lipschitz_modulus(dist)));
  }
  return r;
}

}  // namespace perfhom
