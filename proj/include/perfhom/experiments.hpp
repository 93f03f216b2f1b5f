#pragma once

// End-to-end experiment pipelines shared by the command-line driver and the
// acceptance checks. Each returns plain numbers; writing files is left to
// the caller.

#include <cmath>
#include <vector>

#include "perfhom/analysis.hpp"
#include "perfhom/euler.hpp"
#include "perfhom/homogenized.hpp"
#include "perfhom/oracle.hpp"
#include "perfhom/reflections.hpp"

namespace perfhom {

// --- two holes ------------------------------------------------------------------

struct TwoHoleCheck {
  double ratio = 0.0;          ///< (a/d)^2
  double max_rel_err = 0.0;    ///< worst level-2.. mismatch against the recursion
  double measured_ratio = 0.0; ///< geometric-mean norm ratio
  std::vector<DipoleSet> levels;
};

/// For two holes on a horizontal line the reflections obey
/// A_l^(n+1) = (a/d)^2 diag(1, -1) A_other^(n); compares levels 2..n_levels
/// with that recursion started from the computed level 1.
template <VorticitySource S>
TwoHoleCheck two_hole_closed_form(const S& f, const PorousConfig& c, int n_levels = 3) {
  if (c.size() != 2 || c.centers[0].y != c.centers[1].y)
    throw InvalidArgument("two_hole_closed_form: needs two holes on a horizontal line");
  if (n_levels < 2) throw InvalidArgument("two_hole_closed_form: needs at least two levels");
  const auto hs = run_reflections(f, c, n_levels);
  TwoHoleCheck r;
  const double dist = norm(c.centers[1] - c.centers[0]);
  r.ratio = (c.a / dist) * (c.a / dist);
  r.levels = hs.levels();
  std::vector<Vec2> expect = r.levels[0].vectors;
  for (int n = 1; n < n_levels; ++n) {
    const std::vector<Vec2> prev = expect;
    for (std::size_t l = 0; l < 2; ++l) {
      const Vec2 o = prev[1 - l];
      expect[l] = r.ratio * Vec2{o.x, -o.y};
      const Vec2 got = r.levels[static_cast<std::size_t>(n)].vectors[l];
      r.max_rel_err = std::max(r.max_rel_err, norm(got - expect[l]) / norm(expect[l]));
    }
  }
  r.measured_ratio = contraction_report(level_norms(hs, 2.0)).ratio;
  return r;
}

// --- single hole oracle ----------------------------------------------------------

struct SingleHoleCheck {
  double dipole_rel_err = 0.0;  ///< oracle vs exact -V^a[A] on rings around the hole
  double residual = 0.0;        ///< max of LSQ residual and boundary std of psi
  double flux = 0.0;            ///< |flux of grad psi| through a circle of radius 1.5a
  std::string solver;
};

inline SingleHoleCheck single_hole_oracle(const LinearPotential& f, const PorousConfig& c,
                                          const OracleOptions& opt = {}) {
  if (c.size() != 1) throw InvalidArgument("single_hole_oracle: needs exactly one hole");
  const auto sol = solve_collocation(f, c, opt);
  SingleHoleCheck r;
  r.solver = sol.solver;
  const DipoleSpec exact{c.centers[0], c.a, f.gradient};
  for (double rad : {1.05, 1.5, 3.0, 10.0})
    for (int k = 0; k < 16; ++k) {
      const double t = two_pi * (k + 0.25) / 16;
      const Vec2 x = c.centers[0] + rad * c.a * Vec2{std::cos(t), std::sin(t)};
      const double want = -dipole_eval(exact, x);
      r.dipole_rel_err = std::max(r.dipole_rel_err, std::abs(oracle_correction(sol, x) - want) / std::abs(want));
    }
  r.residual = std::max(sol.residual, boundary_std(sol, 0));
  r.flux = std::abs(oracle_flux(sol, 0, 1.5 * c.a));
  return r;
}

// --- reflections against the oracle --------------------------------------------------

/// ||grad(psi^(n) - psi_oracle)||_{L2} over fluid cells of a grid of spacing
/// h = a * h_over_a covering K_PM enlarged by `margin`.
template <VorticitySource S>
double reflection_oracle_error(const S& f, const PorousConfig& c, int depth, const OracleOptions& opt,
                               double h_over_a = 0.125, double margin = 0.25) {
  const auto hs = run_reflections(f, c, depth);
  const auto sol = solve_collocation(f, c, opt);
  const Rect& b = c.kpm_box;
  const Rect region{b.x0 - margin, b.y0 - margin, b.x1 + margin, b.y1 + margin};
  const GridSpec g = GridSpec::covering(region, c.a * h_over_a);
  const auto mask = fluid_mask(c, g);
  VectorGridField e(g);
#pragma omp parallel for schedule(dynamic, 4)
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (mask[g.index(i, j)]) e(i, j) = hs.correction_grad(g.center(i, j)) - oracle_correction_grad(sol, g.center(i, j));
  return h1dot_masked(e, mask, region).value;
}

// --- homogenized sweeps --------------------------------------------------------------

struct HomogSweepRow {
  double knorm = 0.0;
  double err_psi0 = 0.0;   ///< ||grad(psi_c - psi_0)||_{L2}
  double err_tilde = 0.0;  ///< ||grad(psi_c - psi~_c)||_{L2}
  double err_tilde_l4 = 0.0;
  int iterations = 0;
};

/// k = knorm * bump(center, radius) for each knorm; f and the bump share f's grid.
inline std::vector<HomogSweepRow> homog_sweep(const ScalarGridField& f, Vec2 k_center, double k_radius,
                                              const std::vector<double>& knorms, const EffectiveMatrix& M,
                                              const SolveOptions& opt, double eps0 = 0.25) {
  const auto grad0 = grad_psi0_grid(f);
  std::vector<HomogSweepRow> rows;
  for (double kn : knorms) {
    const VolumeFraction k{rasterize_bump(f.grid, k_center, k_radius, kn), eps0};
    const auto sol = solve_psic(grad0, k, M, opt);
    const auto tilde = first_order_expansion(grad0, k, M, opt.apply);
    const auto dt = sol.grad - tilde;
    rows.push_back({k.sup_norm(), (sol.grad - grad0).l2_norm(), dt.l2_norm(), dt.lp_norm(4.0), sol.iterations});
  }
  return rows;
}

// --- the full elliptic decomposition -----------------------------------------------------

struct DivCurlResult {
  GammaReport gamma;
  ErrorBudget budget;
  double oracle_residual = 0.0;
  std::string oracle_solver;
  int homog_iterations = 0;
  ContractionReport contraction;
  double a_over_d = 0.0;
  std::size_t holes = 0;
};

/// psi_N from the collocation oracle, psi_c and psi~_c on f's grid with k
/// the lattice fraction of c, Gamma norms on the fluid part of O.
inline DivCurlResult divcurl_gamma(const ScalarGridField& f, const PorousConfig& c, const Rect& O,
                                   const OracleOptions& oopt, const SolveOptions& sopt, int depth = 3,
                                   double eta = 0.5) {
  const GridVorticity src(f);
  const auto grad0 = grad_psi0_grid(f);
  const auto k = lattice_fraction(c, f.grid);
  const EffectiveMatrix M = EffectiveMatrix::disk();
  DivCurlResult r;
  r.holes = c.size();
  r.a_over_d = c.ratio();
  const auto sol = solve_collocation(src, c, oopt);
  r.oracle_residual = sol.residual;
  r.oracle_solver = sol.solver;
  if (c.size() > 1) {
    const auto hs = run_reflections(src, c, std::max(depth, 3));
    r.contraction = contraction_report(level_norms(hs, 2.0));
  }
  const auto psic = solve_psic(grad0, k, M, sopt);
  r.homog_iterations = psic.iterations;
  const auto tilde = first_order_expansion(grad0, k, M, sopt.apply);
  const auto phi = make_first_order_correction(src, k, M);
  r.gamma = gamma_decomposition_report(src, c, [&](Vec2 x) { return oracle_correction_grad(sol, x); }, psic, tilde,
                                       phi, O);
  // The H^{-1} term needs mu resolved (h <= a/4); coarser grids report it as 0.
  r.budget = f.grid.h <= c.a / 4.0 ? predictor_F(c, k, eta, sopt.apply.pad)
                                   : make_budget(c.ratio(), 0.0, k.sup_norm(), eta, c.a);
  r.gamma.budget = r.budget;
  return r;
}

// --- two co-rotating vortices -----------------------------------------------------------

struct TwoVortexResult {
  double period_analytic = 0.0;  ///< 8 pi^2 rho^2 / Gamma (point vortices)
  double period_measured = 0.0;
  double position_error = 0.0;   ///< after one blob period, against the exact blob rotation
  bool weights_unchanged = true;
};

/// Equal circulations gamma at (-rho, 0) and (rho, 0), integrated over one
/// exact blob period with `steps` RK4 steps.
inline TwoVortexResult two_vortex(double rho, double gamma, double blob, int steps) {
  const VortexParticles p{{{-rho, 0.0}, {rho, 0.0}}, {gamma, gamma}, blob, 0.0};
  const Setting free = PerforatedSetting{PorousConfig{{}, 0.0, 0.0, 0.25, Rect{}}, 1};
  const double omega = gamma / (pi * (4 * rho * rho + blob * blob));
  const double T = two_pi / omega;
  FlowState s = initial_state(p, free, 0.0);
  double angle = 0.0, prev = 0.0;  // unwrapped angle of particle 1
  for (int n = 0; n < steps; ++n) {
    s = step(s, T / steps, free);
    const Vec2 x = s.particles.positions[1] - 0.5 * (s.particles.positions[0] + s.particles.positions[1]);
    const double a = std::atan2(x.y, x.x);
    double da = a - prev;
    if (da < -pi) da += two_pi;
    if (da > pi) da -= two_pi;
    angle += da;
    prev = a;
  }
  TwoVortexResult r;
  r.period_analytic = 8 * pi * pi * rho * rho / gamma;
  r.period_measured = two_pi * T / angle;
  r.position_error = norm(s.particles.positions[1] - Vec2{rho, 0.0});
  r.weights_unchanged = s.particles.weights == p.weights;
  return r;
}

}  // namespace perfhom
