#pragma once

// Method of reflections for the perforated div-curl problem. Each level
// corrects, at first order on every hole boundary, the trace left by the
// dipoles of all other holes:
//
//   A_l^(1)   = -grad psi_0(x_l)
//   A_l^(n+1) = -sum_{m != l} grad V^a[A_m^(n)](x_l - x_m)
//   psi^(n)   = psi_0 + sum_{j <= n} sum_l V^a[A_l^(j)](x - x_l)

#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/potential.hpp"

namespace perfhom {

struct DipoleSet {
  int level = 1;
  std::vector<Vec2> vectors;

  /// l^q norm of (|A_l|)_l; q = infinity gives the max.
  double norm(double q) const {
    if (std::isinf(q)) {
      double m = 0.0;
      for (Vec2 v : vectors) m = std::max(m, perfhom::norm(v));
      return m;
    }
    double s = 0.0;
    for (Vec2 v : vectors) s += std::pow(perfhom::norm(v), q);
    return std::pow(s, 1.0 / q);
  }
  bool all_finite() const {
    for (Vec2 v : vectors)
      if (!is_finite(v)) return false;
    return true;
  }
};

inline constexpr double q_inf = std::numeric_limits<double>::infinity();

/// Level-1 dipoles from the free-space field. The source must not meet any hole.
template <VorticitySource S>
DipoleSet init_dipoles(const S& f, const PorousConfig& c) {
  for (std::size_t l = 0; l < c.size(); ++l)
    if (support_meets_disk(f, c.centers[l], c.a))
      throw InvalidArgument("init_dipoles: vorticity support meets hole " + std::to_string(l));
  DipoleSet s{1, std::vector<Vec2>(c.size())};
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t l = 0; l < static_cast<std::ptrdiff_t>(c.size()); ++l)
    s.vectors[static_cast<std::size_t>(l)] = -grad_psi0_eval(f, c.centers[static_cast<std::size_t>(l)]);
  return s;
}

inline DipoleSet iterate_dipoles(const DipoleSet& prev, const PorousConfig& c) {
  if (prev.vectors.size() != c.size()) throw InvalidArgument("iterate_dipoles: dipole count does not match config");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(c.size());
  const double a2 = c.a * c.a;
  DipoleSet next{prev.level + 1, std::vector<Vec2>(c.size())};
#pragma omp parallel for
  for (std::ptrdiff_t l = 0; l < n; ++l) {
    Vec2 s;
    for (std::ptrdiff_t m = 0; m < n; ++m)
      if (m != l) s += dipole_grad_unchecked(c.centers[l] - c.centers[m], a2, prev.vectors[m]);
    next.vectors[l] = -s;
  }
  return next;
}

/// psi_0 of a vorticity source plus the dipole corrections of `levels`.
/// Dipoles are linear in A, so the levels are also kept summed per hole.
template <VorticitySource S>
class HybridStream {
 public:
  HybridStream(S base, PorousConfig config, std::vector<DipoleSet> levels)
      : base_(std::move(base)), config_(std::move(config)), levels_(std::move(levels)), total_(config_.size()) {
    for (std::size_t j = 0; j < levels_.size(); ++j) {
      if (levels_[j].level != static_cast<int>(j) + 1) throw InvalidArgument("HybridStream: levels must start at 1");
      if (levels_[j].vectors.size() != config_.size()) throw InvalidArgument("HybridStream: dipole count mismatch");
      for (std::size_t l = 0; l < total_.size(); ++l) total_[l] += levels_[j].vectors[l];
    }
  }

  const S& base() const { return base_; }
  const PorousConfig& config() const { return config_; }
  const std::vector<DipoleSet>& levels() const { return levels_; }
  /// sum over levels of A_l^(j), one vector per hole
  const std::vector<Vec2>& total_dipoles() const { return total_; }
  int depth() const { return static_cast<int>(levels_.size()); }

  /// psi^(n) - psi_0
  double correction(Vec2 x) const {
    check(x);
    const double a2 = config_.a * config_.a;
    double s = 0.0;
    for (std::size_t l = 0; l < total_.size(); ++l) s += dipole_value_unchecked(x - config_.centers[l], a2, total_[l]);
    return s;
  }
  Vec2 correction_grad(Vec2 x) const {
    check(x);
    const double a2 = config_.a * config_.a;
    Vec2 s;
    for (std::size_t l = 0; l < total_.size(); ++l) s += dipole_grad_unchecked(x - config_.centers[l], a2, total_[l]);
    return s;
  }

  double stream(Vec2 x) const { return psi0_eval(base_, x) + correction(x); }
  Vec2 grad(Vec2 x) const { return grad_psi0_eval(base_, x) + correction_grad(x); }
  Vec2 velocity(Vec2 x) const { return perp(grad(x)); }

 private:
  void check(Vec2 x) const {
    if (auto l = config_.hole_containing(x))
      throw DomainError("HybridStream: point inside hole " + std::to_string(*l));
  }

  S base_;
  PorousConfig config_;
  std::vector<DipoleSet> levels_;
  std::vector<Vec2> total_;
};

template <VorticitySource S>
double stream_eval(const HybridStream<S>& hs, Vec2 x) {
  return hs.stream(x);
}
template <VorticitySource S>
Vec2 velocity_eval(const HybridStream<S>& hs, Vec2 x) {
  return hs.velocity(x);
}

/// Levels 1..n_levels of the reflection iteration.
template <VorticitySource S>
HybridStream<S> run_reflections(S f, const PorousConfig& c, int n_levels = 3) {
  if (n_levels < 1) throw InvalidArgument("run_reflections: n_levels must be >= 1");
  std::vector<DipoleSet> levels;
  levels.reserve(static_cast<std::size_t>(n_levels));
  levels.push_back(init_dipoles(f, c));
  for (int n = 1; n < n_levels; ++n) levels.push_back(iterate_dipoles(levels.back(), c));
  for (const auto& s : levels)
    if (!s.all_finite()) throw NumericFailure("run_reflections: non-finite dipole at level " + std::to_string(s.level));
  return HybridStream<S>(std::move(f), c, std::move(levels));
}

/// ||A^(n)||_q for every stored level.
template <VorticitySource S>
std::vector<double> level_norms(const HybridStream<S>& hs, double q) {
  std::vector<double> out;
  for (const auto& s : hs.levels()) out.push_back(s.norm(q));
  return out;
}

struct ContractionReport {
  double ratio = 0.0;             ///< geometric mean of successive ratios
  double max_ratio = 0.0;         ///< worst single-step ratio
  std::vector<double> ratios;     ///< ||A^(n+1)|| / ||A^(n)||
  int levels_used = 0;
  bool hit_zero = false;          ///< a zero norm ended the sequence early
};

inline ContractionReport contraction_report(const std::vector<double>& norms) {
  if (norms.size() < 3) throw InvalidArgument("contraction_report: need at least 3 levels");
  ContractionReport r;
  r.levels_used = 1;
  double log_sum = 0.0;
  for (std::size_t n = 0; n + 1 < norms.size(); ++n) {
    if (norms[n] == 0.0) {
      r.hit_zero = true;
      break;
    }
    const double q = norms[n + 1] / norms[n];
    r.ratios.push_back(q);
    r.max_ratio = std::max(r.max_ratio, q);
    ++r.levels_used;
    if (q == 0.0) {
      r.hit_zero = true;
      break;
    }
    log_sum += std::log(q);
  }
  if (r.hit_zero || r.ratios.empty()) {
    r.ratio = 0.0;
  } else {
    r.ratio = std::exp(log_sum / static_cast<double>(r.ratios.size()));
  }
  return r;
}

/// max over holes and `points` uniform boundary points of |psi - boundary mean|.
template <VorticitySource S>
double boundary_residual(const HybridStream<S>& hs, int points = 64) {
  const PorousConfig& c = hs.config();
  double worst = 0.0;
  std::vector<double> vals(static_cast<std::size_t>(points));
  for (Vec2 x : c.centers) {
    double mean = 0.0;
    for (int k = 0; k < points; ++k) {
      const double t = two_pi * k / points;
      vals[static_cast<std::size_t>(k)] = hs.stream(x + c.a * Vec2{std::cos(t), std::sin(t)});
      mean += vals[static_cast<std::size_t>(k)];
    }
    mean /= points;
    for (double v : vals) worst = std::max(worst, std::abs(v - mean));
  }
  return worst;
}

/// Phi^(n) = (4/pi^2) sum_l A_l 1_{B(x_l, d/2)}, rasterized with cell area
/// fractions. A visual device only; nothing else depends on it.
inline VectorGridField rasterize_Phi(const DipoleSet& s, const PorousConfig& c, const GridSpec& g, int subsamples = 8) {
  VectorGridField out(g);
  const double r = 0.5 * c.d, scale = 4.0 / (pi * pi);
  for (std::size_t l = 0; l < c.size(); ++l) {
    const Vec2 x = c.centers[l];
    const int i0 = std::max(0, static_cast<int>(std::floor((x.x - r - g.origin.x) / g.h)));
    const int i1 = std::min(g.nx - 1, static_cast<int>(std::floor((x.x + r - g.origin.x) / g.h)));
    const int j0 = std::max(0, static_cast<int>(std::floor((x.y - r - g.origin.y) / g.h)));
    const int j1 = std::min(g.ny - 1, static_cast<int>(std::floor((x.y + r - g.origin.y) / g.h)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        out(i, j) += (scale * disk_cell_fraction(g.cell(i, j), x, r, subsamples)) * s.vectors[l];
  }
  return out;
}

/// Closed form of ||Phi^(n)||_{L^p}: (4^{p-1} d^2 / pi^{2p-1} sum |A_l|^p)^{1/p}.
inline double Phi_lp_norm(const DipoleSet& s, const PorousConfig& c, double p) {
  double sum = 0.0;
  for (Vec2 v : s.vectors) sum += std::pow(norm(v), p);
  return std::pow(std::pow(4.0, p - 1) * c.d * c.d / std::pow(pi, 2 * p - 1) * sum, 1.0 / p);
}

// --- CSV -------------------------------------------------------------------------

inline void write_dipoles_csv(std::ostream& os, const std::vector<DipoleSet>& levels) {
  os << std::setprecision(17) << "level,hole_index,Ax,Ay\n";
  for (const auto& s : levels)
    for (std::size_t l = 0; l < s.vectors.size(); ++l)
      os << s.level << ',' << l << ',' << s.vectors[l].x << ',' << s.vectors[l].y << '\n';
}

inline void write_norms_csv(std::ostream& os, const std::vector<DipoleSet>& levels,
                            const std::vector<double>& qs = {2.0, 4.0, q_inf}) {
  os << std::setprecision(17) << "level,q,norm\n";
  for (const auto& s : levels)
    for (double q : qs) os << s.level << ',' << (std::isinf(q) ? std::string("inf") : std::to_string(static_cast<int>(q)))
                           << ',' << s.norm(q) << '\n';
}

}  // namespace perfhom
