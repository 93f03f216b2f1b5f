#include <gtest/gtest.h>

#include <random>

#include "perfhom/analysis.hpp"

using namespace perfhom;

namespace {

const Rect unit{0.0, 0.0, 1.0, 1.0};

VectorGridField constant_field(const GridSpec& g, Vec2 v) {
  VectorGridField f(g);
  for (auto& x : f.values) x = v;
  return f;
}

ScalarGridField random_compact(const GridSpec& g, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarGridField f(g);
  for (int j = 4; j < g.ny - 4; ++j)
    for (int i = 4; i < g.nx - 4; ++i) f(i, j) = u(rng);
  return f;
}

}  // namespace

TEST(H1Masked, Basics) {
  const GridSpec g = GridSpec::covering(unit, 1.0 / 64);
  EXPECT_EQ(h1dot_masked(VectorGridField(g), {}, unit).value, 0.0);
  EXPECT_NEAR(h1dot_masked(constant_field(g, {1, 0}), {}, unit).value, 1.0, 1e-14);
  const auto none = h1dot_masked(constant_field(g, {1, 0}), std::vector<bool>(g.size(), false), unit);
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.value, 0.0);
  EXPECT_THROW(h1dot_masked(VectorGridField(g), std::vector<bool>(3, true), unit), InvalidArgument);
}

TEST(H1Masked, DiskRemovalGivesAreaDeficit) {
  const GridSpec g = GridSpec::covering(unit, 1.0 / 512);
  PorousConfig c = single_hole({0.5, 0.5}, 0.2, unit);
  const double s = pi * 0.04;
  const auto r = h1dot_masked(constant_field(g, {0, 1}), fluid_mask(c, g), unit);
  EXPECT_NEAR(r.value, std::sqrt(1.0 - s), 3e-3);
  EXPECT_LT(r.value, std::sqrt(1.0 - s));  // cut cells are excluded too
}

TEST(H1Masked, MonotoneInMask) {
  const GridSpec g = GridSpec::covering(unit, 1.0 / 32);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorGridField f(g);
  for (auto& v : f.values) v = {u(rng), u(rng)};
  std::vector<bool> mask(g.size(), false);
  double prev = 0.0;
  for (std::size_t n = 0; n < mask.size(); n += 97) {
    for (std::size_t m = n; m < std::min(mask.size(), n + 97); ++m) mask[m] = rng() % 2;
    const double v = h1dot_masked(f, mask, unit).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Hminus1, ZeroAndSingleMode) {
  const GridSpec g{{0, 0}, 0.1, 40, 40};  // L = 4
  EXPECT_EQ(hminus1_periodic(ScalarGridField(g)), 0.0);
  ScalarGridField c(g);
  const double L = 4.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) c(i, j) = std::cos(two_pi * g.center(i, j).x / L);
  const double l2 = L / std::sqrt(2.0);
  EXPECT_NEAR(hminus1_periodic(c), l2 / std::sqrt(1.0 + std::pow(two_pi / L, 2)), 1e-12);
  EXPECT_EQ(hminus1(ScalarGridField(g)), 0.0);
}

TEST(Hminus1, IsANorm) {
  const GridSpec g{{0, 0}, 0.05, 24, 20};
  std::mt19937 rng(5);
  for (int t = 0; t < 5; ++t) {
    const auto a = random_compact(g, rng), b = random_compact(g, rng);
    ScalarGridField sum(g), scaled(g);
    for (std::size_t n = 0; n < g.size(); ++n) {
      sum.values[n] = a.values[n] + b.values[n];
      scaled.values[n] = -3.5 * a.values[n];
    }
    const double na = hminus1(a), nb = hminus1(b);
    EXPECT_LE(hminus1(sum), (na + nb) * (1 + 1e-12));
    EXPECT_NEAR(hminus1(scaled), 3.5 * na, 1e-12 * na);
  }
}

TEST(Hminus1, Errors) {
  const GridSpec g{{0, 0}, 0.1, 10, 10};
  ScalarGridField f(g);
  f(0, 5) = 1.0;
  EXPECT_THROW(hminus1(f), DomainError);
  f(0, 5) = 0.0;
  f(5, 5) = 1.0;
  EXPECT_THROW(hminus1(f, 3.0), InvalidArgument);
}

TEST(Hminus1, LatticeDiscrepancyDecreases) {
  const GridSpec g = GridSpec::covering({-0.1, -0.1, 1.1, 1.1}, 1.0 / 1024);
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {4, 8, 16}) {
    const auto c = build_lattice(n, 0.1, unit);
    const auto k = lattice_fraction(c, g);
    ScalarGridField d = rasterize_mu(c, g, 8);
    for (std::size_t m = 0; m < d.values.size(); ++m) d.values[m] -= k.field.values[m];
    const double v = hminus1(d);
    EXPECT_LT(v, prev) << "n = " << n;
    prev = v;
  }
}

TEST(Predictor, ZeroAndExactMatch) {
  const GridSpec g = GridSpec::covering({-0.1, -0.1, 1.1, 1.1}, 1.0 / 256);
  const PorousConfig empty{{}, 0.0, 0.0, 0.25, unit};
  const auto b0 = predictor_F(empty, VolumeFraction{ScalarGridField(g), 0.25});
  EXPECT_EQ(b0.F_value, 0.0);

  const auto c = build_lattice(4, 0.1, unit);
  VolumeFraction k{rasterize_mu(c, g), 0.25};
  const auto b = predictor_F(c, k, 0.5);
  EXPECT_EQ(b.mu_minus_k_Hm1, 0.0);
  EXPECT_NEAR(b.F_value, std::pow(0.1, 2.5) + 1.0, 1e-14);
  EXPECT_THROW(predictor_F(c, k, 1.0), InvalidArgument);
}

TEST(Predictor, EtaOrderingAndMonotonicity) {
  const auto lo = make_budget(0.1, 1e-3, 0.03, 0.1), hi = make_budget(0.1, 1e-3, 0.03, 0.9);
  EXPECT_GT(hi.geometric_term(), lo.geometric_term());  // (a/d)^{2.1} > (a/d)^{2.9}
  const auto base = make_budget(0.1, 1e-3, 0.03, 0.5);
  EXPECT_GT(make_budget(0.2, 1e-3, 0.03, 0.5).F_value, base.F_value);
  EXPECT_GT(make_budget(0.1, 2e-3, 0.03, 0.5).F_value, base.F_value);
  EXPECT_GT(make_budget(0.1, 1e-3, 0.06, 0.5).F_value, base.F_value);
  EXPECT_NEAR(make_budget(0.1, 1e-2, 0.0, 0.5, 0.05).hole_scale_ratio, 0.05 / 0.1, 1e-14);
}

TEST(FitExponent, ExactPowers) {
  const std::vector<double> xs{0.5, 1.0, 2.0, 4.0};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(x * x * x);
  const auto f = fit_exponent(xs, ys);
  EXPECT_NEAR(f.slope, 3.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_NEAR(fit_exponent({1.0, 3.0}, {1.0, 3.0}).slope, 1.0, 1e-14);
}

TEST(FitExponent, NoisyQuadratic) {
  std::mt19937 rng(2);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> xs, ys;
  for (int i = 0; i < 12; ++i) {
    const double x = std::pow(2.0, -i / 2.0);
    xs.push_back(x);
    ys.push_back(5 * x * x * (1 + noise(rng)));
  }
  EXPECT_NEAR(fit_exponent(xs, ys).slope, 2.0, 0.05);
}

TEST(FitExponent, ScaleInvarianceAndErrors) {
  const std::vector<double> xs{0.1, 0.2, 0.4}, ys{0.3, 0.5, 1.3};
  const double s = fit_exponent(xs, ys).slope;
  std::vector<double> xs2, ys2;
  for (double x : xs) xs2.push_back(7 * x);
  for (double y : ys) ys2.push_back(0.01 * y);
  EXPECT_NEAR(fit_exponent(xs2, ys2).slope, s, 1e-12);
  EXPECT_THROW(fit_exponent({1, 2, 3}, {1, 0, 2}), InvalidArgument);
  EXPECT_THROW(fit_exponent({1}, {1}), InvalidArgument);
}

TEST(GammaReport, NoHolesNoMedium) {
  const GridSpec g = GridSpec::covering({-1.5, -0.75, 1.5, 0.75}, 1.0 / 16);
  const auto f = rasterize_disk(g, {-1.0, 0.0}, 0.4, 1.0);
  const GridVorticity src(f);
  const VolumeFraction k{ScalarGridField(g), 0.25};
  const auto sol = solve_psic(f, k, EffectiveMatrix::disk());
  const auto tilde = first_order_expansion(f, k, EffectiveMatrix::disk());
  const auto phi = make_first_order_correction(src, k, EffectiveMatrix::disk());
  const PorousConfig none{{}, 0.0, 0.0, 0.25, unit};
  const auto r = gamma_decomposition_report(src, none, [](Vec2) { return Vec2{}; }, sol, tilde, phi,
                                            Rect{0.5, -0.5, 1.0, 0.5});
  EXPECT_GT(r.cells, 0u);
  EXPECT_EQ(r.grad_gamma1, 0.0);
  EXPECT_EQ(r.gamma2, 0.0);
  EXPECT_GT(r.grad_psi0, 0.0);
  EXPECT_EQ(r.normalized(), 0.0);
  EXPECT_EQ(to_json(r)["cells"], r.cells);
}
