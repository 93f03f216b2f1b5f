#pragma once

// Homogenized elliptic problem div[(I + k M) grad psi_c] = f.
//
//   L psi          = Delta^{-1} div(k M grad psi)
//   grad psi_{c,n} = grad psi_0 - grad L psi_{c,n-1}      (Neumann fixed point)
//   grad psi~_c    = grad psi_0 - grad L psi_0             (first-order expansion)
//
// T G = grad Delta^{-1} div G is applied either spectrally on a padded
// periodic box (multiplier xi xi^T / |xi|^2) or directly, by exact integrals
// of the kernel d_i d_j (ln|z| / 2pi) over every source cell. Taken as a
// distributional integral the self-cell integral already equals the local
// term diag(1/2, 1/2); the principal value over a square is zero.

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/fft.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/grid.hpp"
#include "perfhom/potential.hpp"

namespace perfhom {

struct EffectiveMatrix {
  Mat2 m;
  Mat2 m_hat;  ///< [[m22, -m21], [-m12, m11]]

  static EffectiveMatrix from(const Mat2& m) { return {m, {m.m22, -m.m21, -m.m12, m.m11}}; }
  /// disk-shaped holes: M = 2 I
  static EffectiveMatrix disk() { return from(Mat2::scaled_identity(2.0)); }
};

enum class LBackend { spectral, direct };

inline const char* to_string(LBackend b) { return b == LBackend::spectral ? "spectral" : "direct"; }

struct ApplyOptions {
  LBackend backend = LBackend::spectral;
  double pad = 4.0;  ///< spectral box spans the grid plus (pad - 1) times supp k on each axis
};

// --- kernel cell integrals ----------------------------------------------------------

/// Symmetric block (11, 12, 22) acting on a vector.
struct KernelBlock {
  double k11 = 0.0, k12 = 0.0, k22 = 0.0;
  Vec2 apply(Vec2 g) const { return {k11 * g.x + k12 * g.y, k12 * g.x + k22 * g.y}; }
};

/// \int_cell d_i d_j (ln|x - y| / 2pi) dy, exact.
inline KernelBlock cz_cell_integral(Vec2 x, const Rect& cell) {
  const double u0 = x.x - cell.x1, u1 = x.x - cell.x0, v0 = x.y - cell.y1, v1 = x.y - cell.y0;
  auto at = [](double p, double q) { return p == 0.0 ? std::copysign(pi / 2, q) : std::atan(q / p); };
  KernelBlock b;
  b.k11 = (at(u1, v1) - at(u1, v0) - at(u0, v1) + at(u0, v0)) / two_pi;
  b.k22 = (at(v1, u1) - at(v1, u0) - at(v0, u1) + at(v0, u0)) / two_pi;
  b.k12 = detail::corner_sum([](double u, double v) { return 0.5 * std::log(u * u + v * v); }, u0, u1, v0, v1) /
          two_pi;
  return b;
}

/// area * (delta |z|^2 - 2 z z^T) / (2 pi |z|^4)
inline KernelBlock cz_midpoint(Vec2 z, double area) {
  const double r2 = norm2(z), s = area / (two_pi * r2 * r2);
  return {s * (r2 - 2 * z.x * z.x), -2 * s * z.x * z.y, s * (r2 - 2 * z.y * z.y)};
}

// --- cell sources ---------------------------------------------------------------------

/// Piecewise-constant vector density G on the nonzero cells of a grid.
struct CellVectorSource {
  GridSpec grid;
  std::vector<int> i, j;
  std::vector<Vec2> values;

  std::size_t size() const { return values.size(); }
};

/// G = k M g on the cells where k != 0.
inline CellVectorSource make_kMg(const ScalarGridField& k, const Mat2& M, const VectorGridField& g) {
  if (!(k.grid == g.grid)) throw InvalidArgument("make_kMg: k and the gradient field live on different grids");
  CellVectorSource s{k.grid, {}, {}, {}};
  for (int jj = 0; jj < k.grid.ny; ++jj)
    for (int ii = 0; ii < k.grid.nx; ++ii)
      if (const double kv = k(ii, jj); kv != 0.0) {
        s.i.push_back(ii);
        s.j.push_back(jj);
        s.values.push_back(kv * (M * g(ii, jj)));
      }
  return s;
}

/// (T G)(x) for a point x anywhere: exact cell integrals within 3 cells of x,
/// midpoint rule beyond.
inline Vec2 cz_apply_point(const CellVectorSource& s, Vec2 x) {
  const double h = s.grid.h, area = h * h, near = 3.5 * h;
  Vec2 out;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const Vec2 c = s.grid.center(s.i[n], s.j[n]);
    const Vec2 z = x - c;
    if (std::abs(z.x) < near && std::abs(z.y) < near) {
      out += cz_cell_integral(x, s.grid.cell(s.i[n], s.j[n])).apply(s.values[n]);
    } else {
      out += cz_midpoint(z, area).apply(s.values[n]);
    }
  }
  return out;
}

/// (Delta^{-1} div G)(x) = (1/2pi) \int (x - y).G(y) / |x - y|^2 dy.
inline double div_potential_point(const CellVectorSource& s, Vec2 x) {
  const double h = s.grid.h, area = h * h;
  double out = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const Vec2 c = s.grid.center(s.i[n], s.j[n]);
    const Vec2 z = x - c;
    if (std::abs(z.x) < 1.5 * h && std::abs(z.y) < 1.5 * h) {
      out += dot(cell_kernel_integral(x, s.grid.cell(s.i[n], s.j[n])), s.values[n]);
    } else {
      out += area * dot(z, s.values[n]) / norm2(z);
    }
  }
  return out / two_pi;
}

// --- apply_L ----------------------------------------------------------------------------

namespace detail {

inline void check_k_support(const ScalarGridField& k) {
  if (k.touches_edge()) throw DomainError("apply_L: support of k touches the grid edge (padding insufficient)");
}

inline VectorGridField apply_T_direct(const CellVectorSource& s) {
  const GridSpec& g = s.grid;
  VectorGridField out(g);
  if (s.size() == 0) return out;
  // Kernel blocks depend only on the cell offset; tabulate them once.
  const int wx = 2 * g.nx - 1, wy = 2 * g.ny - 1;
  std::vector<KernelBlock> table(static_cast<std::size_t>(wx) * wy);
  const Vec2 x0 = g.center(g.nx - 1, g.ny - 1);
#pragma omp parallel for
  for (int dj = 0; dj < wy; ++dj)
    for (int di = 0; di < wx; ++di)
      table[static_cast<std::size_t>(dj) * wx + di] = cz_cell_integral(x0, g.cell(wx - 1 - di, wy - 1 - dj));
  // table[(dj, di)] = block for a target offset (di - nx + 1, dj - ny + 1) from the source.
#pragma omp parallel for
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      Vec2 acc;
      for (std::size_t n = 0; n < s.size(); ++n) {
        const int di = i - s.i[n] + g.nx - 1, dj = j - s.j[n] + g.ny - 1;
        acc += table[static_cast<std::size_t>(dj) * wx + di].apply(s.values[n]);
      }
      out(i, j) = acc;
    }
  return out;
}

/// Mean of xi_1^2 / |xi|^2 over [-p, p] x [-q, q] (1/2 for a square).
inline double dual_cell_average_11(double p, double q) {
  return 0.5 + 0.5 * (p / q) * std::atan(q / p) - 0.5 * (q / p) * std::atan(p / q);
}

}  // namespace detail

/// Multiplier xi xi^T / |xi|^2 applied to G with the grid taken as one period.
/// The zero mode gets the average of the multiplier over the dual cell.
inline VectorGridField gradient_projection_periodic(const VectorGridField& G) {
  const GridSpec& g = G.grid;
  RealFft2d fx(g.nx, g.ny), fy(g.nx, g.ny);
  for (std::size_t n = 0; n < g.size(); ++n) {
    fx.real()[n] = G.values[n].x;
    fy.real()[n] = G.values[n].y;
  }
  fx.forward();
  fy.forward();
  auto X = fx.spectrum();
  auto Y = fy.spectrum();
  const int nxc = fx.nx_complex();
  const double Lx = g.nx * g.h, Ly = g.ny * g.h;
  const double zero11 = detail::dual_cell_average_11(pi / Lx, pi / Ly);
  for (int q = 0; q < g.ny; ++q) {
    const double ky = two_pi * RealFft2d::frequency(q, g.ny) / Ly;
    for (int p = 0; p < nxc; ++p) {
      const double kx = two_pi * p / Lx;
      const std::size_t idx = static_cast<std::size_t>(q) * nxc + p;
      const double k2 = kx * kx + ky * ky;
      if (k2 == 0.0) {
        X[idx] *= zero11;
        Y[idx] *= 1.0 - zero11;
        continue;
      }
      const std::complex<double> proj = (kx * X[idx] + ky * Y[idx]) / k2;
      X[idx] = kx * proj;
      Y[idx] = ky * proj;
    }
  }
  fx.backward();
  fy.backward();
  const double scale = 1.0 / static_cast<double>(g.size());
  VectorGridField out(g);
  for (std::size_t n = 0; n < g.size(); ++n) out.values[n] = {fx.real()[n] * scale, fy.real()[n] * scale};
  return out;
}

namespace detail {

/// The grid is embedded at the lower-left corner of an odd-sized periodic box
/// extended by (pad - 1) support widths of k on each axis.
inline VectorGridField apply_T_spectral(const CellVectorSource& s, const ScalarGridField& k, double pad) {
  const GridSpec& g = s.grid;
  VectorGridField out(g);
  if (s.size() == 0) return out;
  const auto box = k.support_box();
  const int sx = static_cast<int>(std::lround(box->width() / g.h));
  const int sy = static_cast<int>(std::lround(box->height() / g.h));
  const GridSpec P{g.origin, g.h, odd_fft_size(g.nx + static_cast<int>(std::ceil((pad - 1.0) * sx))),
                   odd_fft_size(g.ny + static_cast<int>(std::ceil((pad - 1.0) * sy)))};
  VectorGridField big(P);
  for (std::size_t n = 0; n < s.size(); ++n) big(s.i[n], s.j[n]) = s.values[n];
  const VectorGridField t = gradient_projection_periodic(big);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) out(i, j) = t(i, j);
  return out;
}

}  // namespace detail

/// grad L psi = T(k M grad psi) on the grid of g_grad (which k must share).
inline VectorGridField apply_L(const VectorGridField& g_grad, const VolumeFraction& k, const EffectiveMatrix& M,
                               const ApplyOptions& opt = {}) {
  if (!(k.field.grid == g_grad.grid)) throw InvalidArgument("apply_L: k and the gradient field use different grids");
  if (!(opt.pad >= 4.0)) throw InvalidArgument("apply_L: pad factor must be >= 4");
  detail::check_k_support(k.field);
  const CellVectorSource s = make_kMg(k.field, M.m, g_grad);
  return opt.backend == LBackend::direct ? detail::apply_T_direct(s) : detail::apply_T_spectral(s, k.field, opt.pad);
}

/// Relative L2 change of the spectral apply_L output when the pad factor is doubled.
inline double pad_doubling_change(const VectorGridField& g_grad, const VolumeFraction& k, const EffectiveMatrix& M,
                                  double pad) {
  const auto a = apply_L(g_grad, k, M, {LBackend::spectral, pad});
  const auto b = apply_L(g_grad, k, M, {LBackend::spectral, 2.0 * pad});
  const double ref = b.l2_norm();
  return ref > 0.0 ? (a - b).l2_norm() / ref : 0.0;
}

/// Smallest pad in {pad0, 2 pad0, ...} <= max_pad whose doubling changes the
/// spectral output by less than tol; max_pad when none does.
inline double select_pad(const VectorGridField& g_grad, const VolumeFraction& k, const EffectiveMatrix& M, double tol,
                         double pad0 = 4.0, double max_pad = 32.0) {
  double pad = pad0;
  while (pad < max_pad && pad_doubling_change(g_grad, k, M, pad) >= tol) pad *= 2.0;
  return std::min(pad, max_pad);
}

// --- Neumann iteration -------------------------------------------------------------------

struct HomogSolution {
  VectorGridField grad;             ///< grad psi_c
  int iterations = 0;
  double last_increment = 0.0;      ///< relative L2 increment of the last step
  std::vector<double> increments;   ///< relative L2 increments, one per step
  std::string backend;

  /// geometric mean of successive increment ratios (0 when fewer than 2 steps)
  double contraction() const {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 1; i < increments.size(); ++i)
      if (increments[i - 1] > 0 && increments[i] > 0) {
        s += std::log(increments[i] / increments[i - 1]);
        ++n;
      }
    return n ? std::exp(s / n) : 0.0;
  }
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 50;
  ApplyOptions apply;
  std::optional<VectorGridField> initial;  ///< grad psi_{c,0}; defaults to grad psi_0
};

inline void check_volume_fraction(const VolumeFraction& k) {
  if (!k.field.all_finite()) throw InvalidArgument("volume fraction has non-finite values");
  if (k.sup_norm() > k.eps0 * k.eps0 * (1.0 + 1e-12))
    throw InvalidArgument("||k||_inf = " + std::to_string(k.sup_norm()) + " exceeds eps0^2 = " +
                          std::to_string(k.eps0 * k.eps0));
}

/// Fixed point grad psi_{c,n} = grad psi_0 - T(k M grad psi_{c,n-1}).
inline HomogSolution solve_psic(const VectorGridField& grad_psi0, const VolumeFraction& k, const EffectiveMatrix& M,
                                const SolveOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw InvalidArgument("solve_psic: tol must be positive");
  if (opt.max_iter < 1) throw InvalidArgument("solve_psic: max_iter must be >= 1");
  check_volume_fraction(k);
  HomogSolution sol{opt.initial ? *opt.initial : grad_psi0, 0, 0.0, {}, to_string(opt.apply.backend)};
  if (!(sol.grad.grid == grad_psi0.grid)) throw InvalidArgument("solve_psic: initial iterate on a different grid");
  int growth = 0;
  for (int n = 1; n <= opt.max_iter; ++n) {
    const VectorGridField Lg = apply_L(sol.grad, k, M, opt.apply);
    VectorGridField next(grad_psi0.grid);
    double diff = 0.0, size = 0.0;
    for (std::size_t c = 0; c < next.values.size(); ++c) {
      next.values[c] = grad_psi0.values[c] - Lg.values[c];
      diff += norm2(next.values[c] - sol.grad.values[c]);
      size += norm2(next.values[c]);
    }
    const double inc = size > 0.0 ? std::sqrt(diff / size) : std::sqrt(diff);
    if (!std::isfinite(inc)) throw NumericFailure("solve_psic: non-finite iterate");
    sol.grad = std::move(next);
    sol.iterations = n;
    sol.last_increment = inc;
    if (!sol.increments.empty() && inc > sol.increments.back()) {
      if (++growth >= 2)
        throw NumericFailure("solve_psic: increments grew on two consecutive steps; the iteration does not "
                             "contract, reduce ||k||_inf");
    } else {
      growth = 0;
    }
    sol.increments.push_back(inc);
    if (inc < opt.tol) return sol;
  }
  return sol;
}

/// Convenience overload: f must live on the grid of k.
inline HomogSolution solve_psic(const ScalarGridField& f, const VolumeFraction& k, const EffectiveMatrix& M,
                                const SolveOptions& opt = {}) {
  if (!(f.grid == k.field.grid)) throw InvalidArgument("solve_psic: f and k use different grids");
  return solve_psic(grad_psi0_grid(f), k, M, opt);
}

/// grad psi~_c = grad psi_0 - T(k M grad psi_0)
inline VectorGridField first_order_expansion(const VectorGridField& grad_psi0, const VolumeFraction& k,
                                             const EffectiveMatrix& M, const ApplyOptions& opt = {}) {
  check_volume_fraction(k);
  return grad_psi0 - apply_L(grad_psi0, k, M, opt);
}

inline VectorGridField first_order_expansion(const ScalarGridField& f, const VolumeFraction& k,
                                             const EffectiveMatrix& M, const ApplyOptions& opt = {}) {
  if (!(f.grid == k.field.grid)) throw InvalidArgument("first_order_expansion: f and k use different grids");
  return first_order_expansion(grad_psi0_grid(f), k, M, opt);
}

/// u_c = perp(grad psi_c), bilinear in the grid interior.
inline Vec2 velocity_c(const HomogSolution& sol, Vec2 x) { return perp(interpolate_bilinear(sol.grad, x)); }

/// Scalar potential from a gradient field: trapezoid sums along the first
/// row, then up each column. The anchor cell (0, 0) gets value `anchor`.
inline ScalarGridField integrate_stream(const VectorGridField& g, double anchor = 0.0) {
  ScalarGridField psi(g.grid);
  const double h = g.grid.h;
  psi(0, 0) = anchor;
  for (int i = 1; i < g.grid.nx; ++i) psi(i, 0) = psi(i - 1, 0) + 0.5 * h * (g(i - 1, 0).x + g(i, 0).x);
  for (int i = 0; i < g.grid.nx; ++i)
    for (int j = 1; j < g.grid.ny; ++j) psi(i, j) = psi(i, j - 1) + 0.5 * h * (g(i, j - 1).y + g(i, j).y);
  return psi;
}

// --- pointwise first-order correction -----------------------------------------------------

/// phi = psi~_c - psi_0 = -Delta^{-1} div(k M grad psi_0) and its gradient,
/// evaluated pointwise from k-cell samples of grad psi_0.
struct FirstOrderCorrection {
  CellVectorSource kMg;

  double value(Vec2 x) const { return -div_potential_point(kMg, x); }
  Vec2 grad(Vec2 x) const { return -cz_apply_point(kMg, x); }
};

/// grad psi_0 is sampled at the centres of the cells where k != 0.
template <VorticitySource S>
FirstOrderCorrection make_first_order_correction(const S& f, const VolumeFraction& k, const EffectiveMatrix& M) {
  FirstOrderCorrection c{{k.field.grid, {}, {}, {}}};
  const GridSpec& g = k.field.grid;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (const double kv = k.field(i, j); kv != 0.0) {
        c.kMg.i.push_back(i);
        c.kMg.j.push_back(j);
        c.kMg.values.emplace_back();
      }
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(c.kMg.size()); ++n) {
    const int i = c.kMg.i[n], j = c.kMg.j[n];
    c.kMg.values[n] = k.field(i, j) * (M.m * grad_psi0_eval(f, g.center(i, j)));
  }
  return c;
}

/// Full Neumann iteration on the k cells alone (direct backend): returns
/// k M grad psi_c as a cell source, so that grad psi_c(x) = grad psi_0(x) - T(.)(x).
template <VorticitySource S>
CellVectorSource solve_kMg_cells(const S& f, const VolumeFraction& k, const EffectiveMatrix& M, double tol = 1e-10,
                                 int max_iter = 50) {
  FirstOrderCorrection c = make_first_order_correction(f, k, M);
  CellVectorSource base = c.kMg, cur = c.kMg;
  const std::size_t n = base.size();
  std::vector<double> kv(n);
  for (std::size_t m = 0; m < n; ++m) kv[m] = k.field(base.i[m], base.j[m]);
  const GridSpec& g = base.grid;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    std::vector<Vec2> next(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t m = 0; m < static_cast<std::ptrdiff_t>(n); ++m) {
      const Vec2 Tg = cz_apply_point(cur, g.center(base.i[m], base.j[m]));
      next[m] = base.values[m] - kv[m] * (M.m * Tg);
    }
    double diff = 0.0, size = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      diff += norm2(next[m] - cur.values[m]);
      size += norm2(next[m]);
    }
    cur.values = std::move(next);
    const double inc = size > 0 ? std::sqrt(diff / size) : 0.0;
    if (inc < tol) break;
    if (inc > prev) throw NumericFailure("solve_kMg_cells: iteration does not contract");
    prev = inc;
  }
  return cur;
}

// --- diagnostics -------------------------------------------------------------------------------

/// sup |grad psi_c| over cells at distance >= delta from K_PM, divided by
/// ||f||_1 + ||f||_inf.
inline double regularity_ratio(const HomogSolution& sol, const ScalarGridField& f, const Rect& kpm, double delta) {
  double sup = 0.0;
  const GridSpec& g = sol.grad.grid;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (kpm.distance(g.center(i, j)) >= delta) sup = std::max(sup, norm(sol.grad(i, j)));
  const double s = f.l1_norm() + f.sup_norm();
  return s > 0 ? sup / s : 0.0;
}

/// Central-difference residual of curl((I + k M^) u_c) - f over the grid
/// interior, relative to ||f||_2.
inline double modified_curl_residual(const VectorGridField& grad_psic, const ScalarGridField& k, const EffectiveMatrix& M,
                                     const ScalarGridField& f) {
  const GridSpec& g = grad_psic.grid;
  std::vector<Vec2> w(g.size());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 u = perp(grad_psic(i, j));
      w[g.index(i, j)] = u + k(i, j) * (M.m_hat * u);
    }
  double err = 0.0, ref = 0.0;
  for (int j = 1; j + 1 < g.ny; ++j)
    for (int i = 1; i + 1 < g.nx; ++i) {
      const double curl = (w[g.index(i + 1, j)].y - w[g.index(i - 1, j)].y) / (2 * g.h) -
                          (w[g.index(i, j + 1)].x - w[g.index(i, j - 1)].x) / (2 * g.h);
      err += (curl - f(i, j)) * (curl - f(i, j));
      ref += f(i, j) * f(i, j);
    }
  return ref > 0 ? std::sqrt(err / ref) : std::sqrt(err);
}

/// CSV row: knorm, err_psi0, err_tilde, iterations
inline void write_sweep_csv(std::ostream& os, const std::vector<double>& knorm, const std::vector<double>& err_psi0,
                            const std::vector<double>& err_tilde, const std::vector<int>& iterations) {
  os << std::setprecision(17) << "knorm,err_psi0,err_tilde,iterations\n";
  for (std::size_t n = 0; n < knorm.size(); ++n)
    os << knorm[n] << ',' << err_psi0[n] << ',' << err_tilde[n] << ',' << iterations[n] << '\n';
}

}  // namespace perfhom
