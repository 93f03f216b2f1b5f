#include <gtest/gtest.h>

#include "perfhom/oracle.hpp"
#include "perfhom/reflections.hpp"

using namespace perfhom;

namespace {

const Rect unit{0.0, 0.0, 1.0, 1.0};

ScalarGridField disk_source(Vec2 center, double r, double h = 1.0 / 32) {
  return rasterize_disk(GridSpec::covering({center.x - r - h, center.y - r - h, center.x + r + h, center.y + r + h}, h),
                        center, r, 1.0);
}

}  // namespace

TEST(Oracle, LinearDataGivesExactDipole) {
  const auto c = single_hole({0.4, 0.6}, 0.1, unit);
  const LinearPotential f{{0.3, -0.8}, 0.1};
  const auto sol = solve_collocation(f, c);
  const auto& al = sol.coeffs[0];
  // -V^a[A] has order-1 coefficients (-a A_x, -a A_y)
  EXPECT_NEAR(al[0].real(), -0.1 * 0.3, 1e-14);
  EXPECT_NEAR(al[0].imag(), 0.1 * 0.8, 1e-14);
  for (int m = 1; m < 8; ++m) EXPECT_LT(std::abs(al[static_cast<std::size_t>(m)]), 1e-14);
  EXPECT_LT(sol.residual, 1e-14);
  EXPECT_NEAR(sol.boundary_constants[0], dot(f.gradient, c.centers[0]) + f.offset, 1e-14);
  const Vec2 x{0.9, 0.1};
  EXPECT_NEAR(oracle_correction(sol, x), -dipole_eval({c.centers[0], c.a, f.gradient}, x), 1e-15);
}

TEST(Oracle, FarSourceMatchesCentreGradient) {
  const auto c = single_hole({0.0, 0.0}, 0.05, {-0.1, -0.1, 0.1, 0.1});
  const GridVorticity f(disk_source({-3.0, 1.0}, 0.5));
  const auto sol = solve_collocation(f, c);
  const Vec2 A = grad_psi0_eval(f, c.centers[0]);
  const std::complex<double> expect{-c.a * A.x, -c.a * A.y};
  EXPECT_LT(std::abs(sol.coeffs[0][0] - expect) / std::abs(expect), 1e-3);
  EXPECT_LT(sol.residual, 1e-10);
}

TEST(Oracle, ZeroSource) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(ScalarGridField(GridSpec::covering({2, 2, 3, 3}, 0.1)));
  const auto sol = solve_collocation(f, c);
  for (const auto& h : sol.coeffs)
    for (auto z : h) EXPECT_EQ(std::abs(z), 0.0);
  EXPECT_EQ(sol.residual, 0.0);
  EXPECT_EQ(oracle_eval(sol, {1.5, 0.5}), 0.0);
}

TEST(Oracle, TwoSeparatedHolesMatchReflections) {
  PorousConfig c;
  c.a = 0.01;
  c.d = 0.5;
  c.centers = {{0.25, 0.5}, {0.75, 0.5}};
  c.kpm_box = unit;
  const GridVorticity f(disk_source({-1.0, 0.2}, 0.4));
  const auto sol = solve_collocation(f, c);
  const auto hs = run_reflections(f, c, 2);
  for (Vec2 x : {Vec2{2.0, 2.0}, Vec2{0.5, 1.5}, Vec2{1.5, -0.5}}) {
    const double corr = hs.correction(x);
    EXPECT_LT(std::abs(oracle_correction(sol, x) - corr) / std::abs(corr), 1e-3);
  }
}

TEST(Oracle, FarFieldLogGrowth) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(disk_source({-1.0, 0.5}, 0.4));
  const auto sol = solve_collocation(f, c);
  const double mass = f.mass();
  const Vec2 x{-1.0 + 40.0, 0.5 + 30.0};  // 125 R_f away from the source centre
  const double v = oracle_eval(sol, x);
  EXPECT_LE(std::abs(v - mass / two_pi * std::log(norm(x))), 0.02 * std::abs(v));
}

TEST(Oracle, ZeroCirculationAndFlux) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4));
  const auto sol = solve_collocation(f, c);
  for (std::size_t l = 0; l < c.size(); ++l) {
    EXPECT_LT(std::abs(oracle_flux(sol, l, 1.5 * c.a)), 1e-8);
    // circulation of the velocity = flux of the gradient
    double circ = 0.0;
    const int n = 256;
    for (int k = 0; k < n; ++k) {
      const double t = two_pi * (k + 0.5) / n;
      const Vec2 tau{-std::sin(t), std::cos(t)};
      circ += dot(oracle_velocity(sol, c.centers[l] + 2.0 * c.a * Vec2{std::cos(t), std::sin(t)}), tau);
    }
    EXPECT_LT(std::abs(circ * 2.0 * c.a * two_pi / n), 1e-8);
  }
}

TEST(Oracle, BoundaryConstancy) {
  const auto c = build_lattice(3, 0.15, unit);
  const GridVorticity f(disk_source({-0.7, 0.4}, 0.4));
  const auto sol = solve_collocation(f, c);
  for (std::size_t l = 0; l < c.size(); ++l) EXPECT_LE(boundary_std(sol, l), 10.0 * sol.residual + 1e-15);
}

TEST(Oracle, OrderConvergence) {
  const auto c = build_lattice(3, 0.2, unit);  // d = 5a
  const GridVorticity f(disk_source({-0.7, 0.4}, 0.4));
  double prev = 1.0;
  for (int M : {2, 4, 8}) {
    OracleOptions o;
    o.order = M;
    const double r = solve_collocation(f, c, o).residual;
    EXPECT_LE(r, prev);
    prev = r;
  }
  EXPECT_LT(prev, 1e-7);
}

TEST(Oracle, GradientMatchesFiniteDifference) {
  const auto c = build_lattice(2, 0.15, unit);
  const GridVorticity f(disk_source({-0.7, 0.4}, 0.4));
  const auto sol = solve_collocation(f, c);
  const double e = 1e-6;
  const Vec2 x = c.centers[1] + Vec2{1.3 * c.a, 0.4 * c.a};
  const Vec2 g = oracle_correction_grad(sol, x);
  const Vec2 fd{(oracle_correction(sol, x + Vec2{e, 0}) - oracle_correction(sol, x - Vec2{e, 0})) / (2 * e),
                (oracle_correction(sol, x + Vec2{0, e}) - oracle_correction(sol, x - Vec2{0, e})) / (2 * e)};
  EXPECT_LT(norm(g - fd) / norm(g), 1e-6);
}

TEST(Oracle, SolversAgree) {
  const auto c = build_lattice(3, 0.15, unit);
  const GridVorticity f(disk_source({-0.7, 0.4}, 0.4));
  OracleOptions qr, ne;
  qr.solver = OracleSolver::qr;
  ne.solver = OracleSolver::normal_equations;
  const auto a = solve_collocation(f, c, qr);
  const auto b = solve_collocation(f, c, ne);
  EXPECT_EQ(a.solver, "colpiv_qr");
  EXPECT_EQ(b.solver, "normal_equations_llt");
  for (std::size_t l = 0; l < c.size(); ++l)
    for (std::size_t m = 0; m < a.coeffs[l].size(); ++m)
      EXPECT_NEAR(std::abs(a.coeffs[l][m] - b.coeffs[l][m]), 0.0, 1e-10 * std::abs(a.coeffs[l][0]));
}

TEST(Oracle, Guards) {
  const GridVorticity f(disk_source({-0.7, 0.4}, 0.4));
  EXPECT_THROW(solve_collocation(f, build_lattice(9, 0.1, unit)), InvalidArgument);
  OracleOptions o;
  o.order = 8;
  o.pts_per_hole = 16;
  EXPECT_THROW(solve_collocation(f, build_lattice(2, 0.1, unit), o), InvalidArgument);
  EXPECT_THROW(solve_collocation(GridVorticity(disk_source({0.25, 0.25}, 0.2)), build_lattice(2, 0.1, unit)),
               InvalidArgument);
  const auto sol = solve_collocation(f, build_lattice(2, 0.1, unit));
  EXPECT_THROW(oracle_eval(sol, {0.25, 0.26}), DomainError);
}

TEST(Oracle, JsonExport) {
  const auto sol = solve_collocation(LinearPotential{{1, 0}}, single_hole({0.5, 0.5}, 0.1, unit));
  const auto j = to_json(sol, "abc");
  EXPECT_EQ(j["order"], 8);
  EXPECT_EQ(j["holes"].size(), 1u);
  EXPECT_EQ(j["holes"][0]["coeffs"].size(), 16u);
  EXPECT_EQ(j["config_hash"], "abc");
}
