#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "perfhom/reflections.hpp"

using namespace perfhom;

namespace {

const Rect unit{0.0, 0.0, 1.0, 1.0};

PorousConfig two_holes(double a, double d) {
  PorousConfig c;
  c.centers = {{0.0, 0.0}, {d, 0.0}};
  c.a = a;
  c.d = d;
  c.kpm_box = {-d, -d, 2 * d, d};
  return c;
}

ScalarGridField disk_source(Vec2 center, double r, double h = 1.0 / 64) {
  return rasterize_disk(GridSpec::covering({center.x - r - h, center.y - r - h, center.x + r + h, center.y + r + h}, h),
                        center, r, 1.0);
}

}  // namespace

TEST(InitDipoles, ZeroSource) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(ScalarGridField(GridSpec::covering({2, 2, 3, 3}, 0.1)));
  const auto s = init_dipoles(f, c);
  for (Vec2 v : s.vectors) EXPECT_EQ(v, (Vec2{0, 0}));
}

TEST(InitDipoles, UnitDiskOneHole) {
  const auto c = single_hole({3.0, 0.0}, 0.1, {2.5, -0.5, 3.5, 0.5});
  const GridVorticity f(disk_source({0, 0}, 1.0, 1.0 / 128));
  const auto s = init_dipoles(f, c);
  EXPECT_NEAR(s.vectors[0].x, -1.0 / 6.0, 1e-3);
  EXPECT_NEAR(s.vectors[0].y, 0.0, 1e-3);
}

TEST(InitDipoles, MirrorSymmetricHoles) {
  PorousConfig c;
  c.centers = {{-3.0, 0.0}, {3.0, 0.0}};
  c.a = 0.1;
  c.d = 6.0;
  c.kpm_box = {-3.5, -0.5, 3.5, 0.5};
  const GridVorticity f(disk_source({0, 0}, 1.0, 1.0 / 32));
  const auto s = init_dipoles(f, c);
  EXPECT_NEAR(s.vectors[0].x, -s.vectors[1].x, 1e-12);
  EXPECT_NEAR(s.vectors[0].y, s.vectors[1].y, 1e-12);
}

TEST(InitDipoles, RejectsOverlappingSupport) {
  const auto c = single_hole({0.5, 0.5}, 0.1, unit);
  const GridVorticity f(disk_source({0.5, 0.5}, 0.3, 1.0 / 32));
  EXPECT_THROW(init_dipoles(f, c), InvalidArgument);
}

TEST(IterateDipoles, TwoHoleClosedForm) {
  const double a = 0.1, d = 0.5;
  const auto c = two_holes(a, d);
  const DipoleSet s1{1, {{-1.0, 0.0}, {-1.0, 0.0}}};
  const auto s2 = iterate_dipoles(s1, c);
  for (Vec2 v : s2.vectors) {
    EXPECT_NEAR(v.x, -a * a / (d * d), 1e-15);
    EXPECT_NEAR(v.y, 0.0, 1e-15);
  }
}

TEST(IterateDipoles, TwoHoleRecursionGeneralVectors) {
  // Along the axis e1 the reflection acts as (a/d)^2 diag(1, -1) on the
  // other hole's vector.
  const double a = 0.07, d = 0.9;
  const auto c = two_holes(a, d);
  const double r2 = (a / d) * (a / d);
  DipoleSet s{1, {{0.3, -1.1}, {0.8, 0.25}}};
  for (int n = 0; n < 2; ++n) {
    const auto next = iterate_dipoles(s, c);
    for (int l = 0; l < 2; ++l) {
      const Vec2 other = s.vectors[1 - l];
      const Vec2 expect{r2 * other.x, -r2 * other.y};
      EXPECT_LT(norm(next.vectors[l] - expect) / norm(expect), 1e-12);
    }
    s = next;
  }
}

TEST(IterateDipoles, SingleHoleAndZeroInput) {
  const auto c = single_hole({0.5, 0.5}, 0.1, unit);
  EXPECT_EQ(iterate_dipoles(DipoleSet{1, {{1.0, 2.0}}}, c).vectors[0], (Vec2{0, 0}));
  const auto lat = build_lattice(3, 0.1, unit);
  const auto z = iterate_dipoles(DipoleSet{1, std::vector<Vec2>(9)}, lat);
  EXPECT_EQ(z.norm(2), 0.0);
}

TEST(RunReflections, DepthAndDecreasingNorms) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 32));
  const auto hs = run_reflections(f, c, 3);
  ASSERT_EQ(hs.depth(), 3);
  const auto n = level_norms(hs, 2.0);
  EXPECT_GT(n[0], n[1]);
  EXPECT_GT(n[1], n[2]);
  EXPECT_THROW(run_reflections(f, c, 0), InvalidArgument);
}

TEST(RunReflections, LevelOneDefinition) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 32));
  const auto hs = run_reflections(f, c, 1);
  const Vec2 x{1.3, 0.2};
  double expect = psi0_eval(f, x);
  for (std::size_t l = 0; l < c.size(); ++l) expect += dipole_eval({c.centers[l], c.a, hs.levels()[0].vectors[l]}, x);
  EXPECT_NEAR(stream_eval(hs, x), expect, 1e-14);
}

TEST(RunReflections, ZeroSourceAndNoHoles) {
  const auto c = build_lattice(2, 0.1, unit);
  const GridVorticity zero(ScalarGridField(GridSpec::covering({2, 2, 3, 3}, 0.1)));
  const auto hs = run_reflections(zero, c, 3);
  EXPECT_EQ(stream_eval(hs, {1.5, 0.5}), 0.0);

  PorousConfig none;
  none.kpm_box = unit;
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 32));
  const auto free = run_reflections(f, none, 3);
  EXPECT_EQ(stream_eval(free, {0.4, 0.4}), psi0_eval(f, {0.4, 0.4}));
}

TEST(RunReflections, InsideHoleRejected) {
  const auto c = build_lattice(2, 0.1, unit);
  const auto hs = run_reflections(LinearPotential{{1.0, 0.0}}, c, 2);
  EXPECT_THROW(stream_eval(hs, {0.25, 0.26}), DomainError);
  EXPECT_THROW(velocity_eval(hs, {0.75, 0.74}), DomainError);
}

TEST(RunReflections, VelocityMatchesFiniteDifference) {
  const auto c = build_lattice(3, 0.1, unit);
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 32));
  const auto hs = run_reflections(f, c, 3);
  const double e = 1e-6;
  for (Vec2 x : {Vec2{0.5, 0.5 + 1.5 * c.a}, Vec2{1.2, 0.1}, Vec2{0.1, 0.9}}) {
    const Vec2 u = velocity_eval(hs, x);
    const Vec2 fd{-(stream_eval(hs, x + Vec2{0, e}) - stream_eval(hs, x - Vec2{0, e})) / (2 * e),
                  (stream_eval(hs, x + Vec2{e, 0}) - stream_eval(hs, x - Vec2{e, 0})) / (2 * e)};
    EXPECT_LT(norm(u - fd) / norm(u), 1e-4);
  }
}

TEST(RunReflections, LinearFieldSingleHoleExact) {
  // For psi_0 = A.x the level-1 dipole makes the hole boundary exactly level.
  const auto c = single_hole({0.4, 0.6}, 0.1, unit);
  const auto hs = run_reflections(LinearPotential{{0.3, -0.8}, 0.2}, c, 1);
  EXPECT_LT(boundary_residual(hs), 1e-14);
}

TEST(RunReflections, BoundaryCancellationSingleHole) {
  const auto c = single_hole({0.0, 0.0}, 0.1, {-0.2, -0.2, 0.2, 0.2});
  const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 64));
  const auto hs = run_reflections(f, c, 1);
  // Without the dipole the oscillation is about a |grad psi_0|; with it only
  // the curvature of psi_0 across the hole remains.
  const auto bare = run_reflections(f, PorousConfig{{}, c.a, c.d, c.eps0, c.kpm_box}, 1);
  double osc0 = 0.0;
  for (int k = 0; k < 64; ++k) {
    const double t = two_pi * k / 64;
    osc0 = std::max(osc0, std::abs(stream_eval(bare, c.a * Vec2{std::cos(t), std::sin(t)}) - psi0_eval(f, {0, 0})));
  }
  EXPECT_LT(boundary_residual(hs), 0.05 * osc0);
}

TEST(RunReflections, BoundaryResidualNonIncreasing) {
  for (double eps : {0.05, 0.1}) {
    const auto c = build_lattice(3, eps, unit);
    const GridVorticity f(disk_source({-0.8, 0.5}, 0.4, 1.0 / 32));
    double prev = boundary_residual(run_reflections(f, c, 1));
    for (int n = 2; n <= 3; ++n) {
      const double r = boundary_residual(run_reflections(f, c, n));
      EXPECT_LE(r, prev * (1 + 1e-12)) << "eps=" << eps << " level " << n;
      prev = r;
    }
  }
}

TEST(RunReflections, MirrorSymmetry) {
  const Rect box{0.0, -0.5, 1.0, 0.5};
  const auto c = build_lattice(4, 0.1, box);
  const GridSpec g{{-1.5, -0.5}, 1.0 / 32, 32, 32};
  const GridVorticity f(rasterize_disk(g, {-1.0, 0.0}, 0.4, 1.0));
  const auto hs = run_reflections(f, c, 3);
  for (const auto& s : hs.levels())
    for (std::size_t l = 0; l < c.size(); ++l) {
      const Vec2 x = c.centers[l];
      for (std::size_t m = 0; m < c.size(); ++m) {
        if (norm(c.centers[m] - Vec2{x.x, -x.y}) > 1e-12) continue;
        const double scale = s.norm(q_inf);
        EXPECT_NEAR(s.vectors[m].x, s.vectors[l].x, 1e-10 * scale);
        EXPECT_NEAR(s.vectors[m].y, -s.vectors[l].y, 1e-10 * scale);
      }
    }
}

TEST(Contraction, GeometricSequence) {
  const auto r = contraction_report({1.0, 0.3, 0.09, 0.027});
  EXPECT_NEAR(r.ratio, 0.3, 1e-14);
  EXPECT_FALSE(r.hit_zero);
  EXPECT_THROW(contraction_report({1.0, 0.5}), InvalidArgument);
  const auto z = contraction_report({1.0, 0.0, 0.0});
  EXPECT_TRUE(z.hit_zero);
}

TEST(Contraction, TwoHoleRatioIsRatioSquared) {
  const auto c = two_holes(0.05, 0.5);
  const auto hs = run_reflections(LinearPotential{{1.0, 0.4}}, c, 4);
  EXPECT_NEAR(contraction_report(level_norms(hs, 2.0)).ratio, 0.01, 1e-12);
}

TEST(Contraction, LatticeBelowHalf) {
  for (int n : {4, 10}) {
    const auto c = build_lattice(n, 0.1, unit);
    const GridVorticity f(disk_source({-1.0, 0.3}, 0.4, 1.0 / 32));
    const auto hs = run_reflections(f, c, 6);
    for (double q : {2.0, 4.0, q_inf}) EXPECT_LE(contraction_report(level_norms(hs, q)).max_ratio, 0.5);
  }
}

TEST(Phi, LpIdentity) {
  const auto c = build_lattice(3, 0.1, unit);
  const DipoleSet s{1, {{1, 0}, {0, 2}, {1, 1}, {-1, 0.5}, {0, 0}, {3, -1}, {0.2, 0.2}, {1, -1}, {-2, 0}}};
  // Cut cells hold averages, so the rasterized norm approaches the
  // closed form from below at rate O(h).
  const auto phi = rasterize_Phi(s, c, GridSpec::covering(unit, 1.0 / 768), 4);
  for (double p : {2.0, 4.0}) {
    const double ratio = phi.lp_norm(p) / Phi_lp_norm(s, c, p);
    EXPECT_LE(ratio, 1.0);
    EXPECT_GT(ratio, 1.0 - 2e-3);
  }
}

TEST(Csv, DipolesAndNorms) {
  const auto hs = run_reflections(LinearPotential{{1.0, 0.0}}, two_holes(0.1, 1.0), 2);
  std::ostringstream a, b;
  write_dipoles_csv(a, hs.levels());
  write_norms_csv(b, hs.levels());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "level,hole_index,Ax,Ay");
  EXPECT_NE(b.str().find("2,inf,"), std::string::npos);
  const std::string rows = a.str();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 5);
}
