#pragma once

// Error functionals and rate fits: masked Ḣ¹/L² norms, a periodic-box H^{-1}
// norm standing in for ||mu - k||_{W^{-1,2}}, the error predictor F(N, k),
// and the decomposition psi_N = psi_c + Gamma_1 + Gamma_2.

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfhom/core.hpp"
#include "perfhom/fft.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/grid.hpp"
#include "perfhom/homogenized.hpp"
#include "perfhom/oracle.hpp"
#include "perfhom/reflections.hpp"

namespace perfhom {

struct MaskedNorm {
  double value = 0.0;
  std::size_t cells = 0;
  bool empty = true;  ///< no cell selected; value is then 0
};

/// sqrt(sum |g|^2 h^2) over cells whose centre lies in `region` and whose mask entry is set.
/// An empty mask vector selects every cell.
inline MaskedNorm h1dot_masked(const VectorGridField& g, const std::vector<bool>& mask, const Rect& region) {
  const GridSpec& G = g.grid;
  if (!mask.empty() && mask.size() != G.size()) throw InvalidArgument("h1dot_masked: mask size does not match grid");
  MaskedNorm r;
  double s = 0.0;
  for (int j = 0; j < G.ny; ++j)
    for (int i = 0; i < G.nx; ++i) {
      const std::size_t c = G.index(i, j);
      if ((!mask.empty() && !mask[c]) || !region.contains(G.center(i, j))) continue;
      s += norm2(g.values[c]);
      ++r.cells;
    }
  r.empty = r.cells == 0;
  r.value = std::sqrt(s * G.cell_area());
  return r;
}

inline MaskedNorm l2_masked(const ScalarGridField& f, const std::vector<bool>& mask, const Rect& region) {
  const GridSpec& G = f.grid;
  if (!mask.empty() && mask.size() != G.size()) throw InvalidArgument("l2_masked: mask size does not match grid");
  MaskedNorm r;
  double s = 0.0;
  for (int j = 0; j < G.ny; ++j)
    for (int i = 0; i < G.nx; ++i) {
      const std::size_t c = G.index(i, j);
      if ((!mask.empty() && !mask[c]) || !region.contains(G.center(i, j))) continue;
      s += f.values[c] * f.values[c];
      ++r.cells;
    }
  r.empty = r.cells == 0;
  r.value = std::sqrt(s * G.cell_area());
  return r;
}

// --- H^{-1} ------------------------------------------------------------------------

/// sqrt((1/|box|) sum_xi |g^(xi)|^2 / (1 + |xi|^2)) with g^ = h^2 sum g e^{-i xi.x},
/// treating the grid itself as one period.
inline double hminus1_periodic(const ScalarGridField& g) {
  const GridSpec& G = g.grid;
  RealFft2d fft(G.nx, G.ny);
  std::copy(g.values.begin(), g.values.end(), fft.real().begin());
  fft.forward();
  const auto X = fft.spectrum();
  const double Lx = G.nx * G.h, Ly = G.ny * G.h, h2 = G.cell_area();
  double s = 0.0;
  for (int q = 0; q < G.ny; ++q) {
    const double ky = two_pi * RealFft2d::frequency(q, G.ny) / Ly;
    for (int p = 0; p < fft.nx_complex(); ++p) {
      const double kx = two_pi * p / Lx;
      // half-spectrum: interior columns stand for a conjugate pair
      const bool paired = p > 0 && 2 * p != G.nx;
      const double w = (paired ? 2.0 : 1.0) / (1.0 + kx * kx + ky * ky);
      s += w * std::norm(X[static_cast<std::size_t>(q) * fft.nx_complex() + p]) * h2 * h2;
    }
  }
  return std::sqrt(s / (Lx * Ly));
}

/// H^{-1} norm of a compactly supported field on a periodic box padded by
/// (pad - 1) support widths on each axis.
inline double hminus1(const ScalarGridField& g, double pad = 4.0) {
  if (!(pad >= 4.0)) throw InvalidArgument("hminus1: pad factor must be >= 4");
  const auto box = g.support_box();
  if (!box) return 0.0;
  if (g.touches_edge()) throw DomainError("hminus1: support touches the grid edge");
  const GridSpec& G = g.grid;
  const int sx = static_cast<int>(std::lround(box->width() / G.h));
  const int sy = static_cast<int>(std::lround(box->height() / G.h));
  const GridSpec P{G.origin, G.h, G.nx + static_cast<int>(std::ceil((pad - 1.0) * sx)),
                   G.ny + static_cast<int>(std::ceil((pad - 1.0) * sy))};
  ScalarGridField big(P);
  for (int j = 0; j < G.ny; ++j)
    for (int i = 0; i < G.nx; ++i) big(i, j) = g(i, j);
  return hminus1_periodic(big);
}

// --- predictor ---------------------------------------------------------------------

struct ErrorBudget {
  double a_over_d = 0.0;
  double mu_minus_k_Hm1 = 0.0;
  double k_inf = 0.0;
  double eta = 0.5;
  double p = 2.0;
  double F_value = 0.0;
  double hole_scale_ratio = 0.0;  ///< a / ||mu - k||^{p/(p+2)}, 0 when undefined

  double geometric_term() const { return std::pow(a_over_d, 3.0 - eta); }
  double discrepancy_term() const {
    return std::pow(mu_minus_k_Hm1, p * (1.0 - eta) / (p + 2.0)) + std::sqrt(mu_minus_k_Hm1);
  }
  double k_term() const { return k_inf * k_inf; }
};

inline ErrorBudget make_budget(double a_over_d, double hm1, double k_inf, double eta, double a = 0.0) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("predictor_F: eta must lie in (0, 1)");
  if (a_over_d < 0 || hm1 < 0 || k_inf < 0) throw InvalidArgument("predictor_F: negative budget component");
  ErrorBudget b{a_over_d, hm1, k_inf, eta, 2.0, 0.0, 0.0};
  b.F_value = b.geometric_term() + b.discrepancy_term() + b.k_term();
  if (hm1 > 0.0) b.hole_scale_ratio = a / std::pow(hm1, b.p / (b.p + 2.0));
  return b;
}

/// Builds the budget from a configuration and its volume fraction; mu is
/// rasterized on the grid of k.
inline ErrorBudget predictor_F(const PorousConfig& c, const VolumeFraction& k, double eta = 0.5, double pad = 4.0) {
  ScalarGridField diff = c.empty() ? ScalarGridField(k.field.grid) : rasterize_mu(c, k.field.grid);
  for (std::size_t n = 0; n < diff.values.size(); ++n) diff.values[n] -= k.field.values[n];
  return make_budget(c.ratio(), hminus1(diff, pad), k.sup_norm(), eta, c.a);
}

// --- rate fits ----------------------------------------------------------------------

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
};

/// Least-squares slope of log y against log x.
inline ExponentFit fit_exponent(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit_exponent: size mismatch");
  if (xs.size() < 2) throw InvalidArgument("fit_exponent: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0) || !(ys[i] > 0)) throw InvalidArgument("fit_exponent: data must be positive");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx, dy = std::log(ys[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw InvalidArgument("fit_exponent: xs are all equal");
  ExponentFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

// --- Gamma decomposition -------------------------------------------------------------

/// Dipole field of one reflection level: sum_l V^a[A_l](x - x_l).
struct FirstReflection {
  PorousConfig config;
  DipoleSet dipoles;

  double value(Vec2 x) const {
    double s = 0.0;
    const double a2 = config.a * config.a;
    for (std::size_t l = 0; l < config.size(); ++l) s += dipole_value_unchecked(x - config.centers[l], a2, dipoles.vectors[l]);
    return s;
  }
  Vec2 grad(Vec2 x) const {
    Vec2 s;
    const double a2 = config.a * config.a;
    for (std::size_t l = 0; l < config.size(); ++l) s += dipole_grad_unchecked(x - config.centers[l], a2, dipoles.vectors[l]);
    return s;
  }
};

struct GammaReport {
  double grad_gamma1 = 0.0;   ///< ||grad Gamma_1||_{L2(O cap F_N)}
  double gamma2 = 0.0;        ///< ||Gamma_2||_{L2(O cap F_N)}
  double grad_psi0 = 0.0;     ///< ||grad psi_0|| on the same cells
  double psi0_osc = 0.0;      ///< ||psi_0 - mean|| on the same cells
  std::size_t cells = 0;
  std::optional<ErrorBudget> budget;

  double normalized() const {
    const double s = grad_psi0 + psi0_osc;
    return s > 0 ? (grad_gamma1 + gamma2) / s : 0.0;
  }
};

inline nlohmann::json to_json(const GammaReport& r) {
  nlohmann::json j{{"grad_gamma1", r.grad_gamma1}, {"gamma2", r.gamma2},     {"grad_psi0", r.grad_psi0},
                   {"psi0_osc", r.psi0_osc},       {"cells", r.cells},       {"normalized", r.normalized()}};
  if (r.budget) j["F"] = r.budget->F_value;
  return j;
}

/// Evaluates Gamma_1 = psi_N - psi_bar_N + psi~_c - psi_c and
/// Gamma_2 = psi_bar_N - psi~_c on the fluid cells of the psi_c grid inside O.
/// `perforated_grad(x)` returns grad(psi_N - psi_0); psi_bar_N is psi_0 plus the
/// first reflection; `tilde_grad` is grad psi~_c on the psi_c grid and `phi`
/// is psi~_c - psi_0 pointwise.
template <VorticitySource S, class PerforatedGrad>
GammaReport gamma_decomposition_report(const S& f, const PorousConfig& c, PerforatedGrad&& perforated_grad,
                                       const HomogSolution& psic, const VectorGridField& tilde_grad,
                                       const FirstOrderCorrection& phi, const Rect& O) {
  const GridSpec& g = psic.grad.grid;
  if (!(tilde_grad.grid == g)) throw InvalidArgument("gamma_decomposition_report: grids differ");
  const auto mask = c.empty() ? std::vector<bool>(g.size(), true) : fluid_mask(c, g);
  std::vector<std::size_t> cells;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (mask[g.index(i, j)] && O.contains(g.center(i, j))) cells.push_back(g.index(i, j));
  const FirstReflection bar{c, c.empty() ? DipoleSet{} : init_dipoles(f, c)};
  std::vector<double> g1(cells.size()), g2(cells.size()), gp(cells.size()), p0(cells.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(cells.size()); ++n) {
    const std::size_t idx = cells[static_cast<std::size_t>(n)];
    const int i = static_cast<int>(idx % static_cast<std::size_t>(g.nx));
    const int j = static_cast<int>(idx / static_cast<std::size_t>(g.nx));
    const Vec2 x = g.center(i, j);
    const Vec2 d1 = perforated_grad(x) - bar.grad(x) + tilde_grad(i, j) - psic.grad(i, j);
    g1[n] = norm2(d1);
    g2[n] = bar.value(x) - phi.value(x);
    gp[n] = norm2(grad_psi0_eval(f, x));
    p0[n] = psi0_eval(f, x);
  }
  GammaReport r;
  r.cells = cells.size();
  if (cells.empty()) return r;
  const double area = g.cell_area();
  double mean = 0.0;
  for (double v : p0) mean += v;
  mean /= static_cast<double>(p0.size());
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (std::size_t n = 0; n < cells.size(); ++n) {
    s1 += g1[n];
    s2 += g2[n] * g2[n];
    s3 += gp[n];
    s4 += (p0[n] - mean) * (p0[n] - mean);
  }
  r.grad_gamma1 = std::sqrt(s1 * area);
  r.gamma2 = std::sqrt(s2 * area);
  r.grad_psi0 = std::sqrt(s3 * area);
  r.psi0_osc = std::sqrt(s4 * area);
  return r;
}

/// CSV: x, y, slope, r2 summary of one rate fit.
inline void write_fit_csv(std::ostream& os, const std::vector<double>& xs, const std::vector<double>& ys) {
  const auto f = fit_exponent(xs, ys);
  os << std::setprecision(17) << "x,y\n";
  for (std::size_t i = 0; i < xs.size(); ++i) os << xs[i] << ',' << ys[i] << '\n';
  os << "# slope," << f.slope << ",r2," << f.r2 << '\n';
}

}  // namespace perfhom
