#pragma once

// Vorticity transport by blob particles. The perforated velocity comes from
// the reflection stream psi^(n) built on the current particles; the
// homogenized one is u_0 + perp(grad phi) with phi = -Delta^{-1} div(k M grad psi_0)
// summed over the k cells (or the full Neumann solution on those cells).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/grid.hpp"
#include "perfhom/homogenized.hpp"
#include "perfhom/potential.hpp"
#include "perfhom/reflections.hpp"

namespace perfhom {

/// Particles at the nodes of a lattice of spacing h_p aligned with the grid
/// origin, one per node where omega0 is nonzero, weight omega0 * h_p^2.
/// With a medium box, every particle must keep a distance >= margin from it.
inline VortexParticles discretize_vorticity(const ScalarGridField& omega0, double h_p, double blob,
                                            const std::optional<Rect>& kpm_box = std::nullopt, double margin = 0.0) {
  if (!(h_p > 0.0)) throw InvalidArgument("discretize_vorticity: particle spacing must be positive");
  if (!(blob >= 0.0)) throw InvalidArgument("discretize_vorticity: blob radius must be nonnegative");
  VortexParticles p;
  p.blob = blob;
  p.omega_max = omega0.sup_norm();
  const auto box = omega0.support_box();
  if (!box) return p;
  const GridSpec& g = omega0.grid;
  const int i0 = static_cast<int>(std::floor((box->x0 - g.origin.x) / h_p));
  const int i1 = static_cast<int>(std::ceil((box->x1 - g.origin.x) / h_p));
  const int j0 = static_cast<int>(std::floor((box->y0 - g.origin.y) / h_p));
  const int j1 = static_cast<int>(std::ceil((box->y1 - g.origin.y) / h_p));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const Vec2 x{g.origin.x + (i + 0.5) * h_p, g.origin.y + (j + 0.5) * h_p};
      if (!g.extent().contains(x)) continue;
      const double w = omega0.cell_value(x);
      if (w == 0.0) continue;
      p.positions.push_back(x);
      p.weights.push_back(w * h_p * h_p);
    }
  if (kpm_box)
    for (Vec2 x : p.positions)
      if (kpm_box->distance(x) < margin)
        throw InvalidArgument("discretize_vorticity: vorticity support within margin " + std::to_string(margin) +
                              " of the perforated region");
  return p;
}

/// Smoothed vorticity sum_i w_i delta^2 / (pi (|x - X_i|^2 + delta^2)^2), the
/// Laplacian of the blob stream function.
inline double smoothed_vorticity(const VortexParticles& p, Vec2 x) {
  const double d2 = p.blob * p.blob;
  if (d2 == 0.0) throw InvalidArgument("smoothed_vorticity: needs a positive blob radius");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = norm2(x - p.positions[i]) + d2;
    s += p.weights[i] / (r * r);
  }
  return s * d2 / pi;
}

// --- settings -----------------------------------------------------------------

struct PerforatedSetting {
  PorousConfig config;
  int n_levels = 3;
};

struct HomogenizedSetting {
  VolumeFraction k;
  EffectiveMatrix M = EffectiveMatrix::disk();
  std::optional<Rect> kpm_box;  ///< region the vorticity must avoid
  bool full_solve = false;      ///< Neumann solution on the k cells instead of the first-order field
  double tol = 1e-10;
};

using Setting = std::variant<PerforatedSetting, HomogenizedSetting>;

inline std::optional<Rect> medium_box(const Setting& s) {
  if (const auto* p = std::get_if<PerforatedSetting>(&s)) {
    if (p->config.empty()) return std::nullopt;
    return p->config.kpm_box;
  }
  return std::get<HomogenizedSetting>(s).kpm_box;
}

/// Velocity induced by a particle set in one setting, frozen at construction.
class VelocityField {
 public:
  VelocityField(const VortexParticles& p, const Setting& s) {
    if (const auto* ps = std::get_if<PerforatedSetting>(&s)) {
      perforated_.emplace(run_reflections(p, ps->config, ps->n_levels));
      return;
    }
    const auto& hs = std::get<HomogenizedSetting>(s);
    base_ = p;
    kMg_ = hs.full_solve ? solve_kMg_cells(p, hs.k, hs.M, hs.tol) : make_first_order_correction(p, hs.k, hs.M).kMg;
  }

  /// grad psi at x; DomainError inside a hole.
  Vec2 grad(Vec2 x) const {
    if (perforated_) return perforated_->grad(x);
    return grad_psi0_eval(base_, x) - cz_apply_point(kMg_, x);
  }
  Vec2 operator()(Vec2 x) const { return perp(grad(x)); }

 private:
  std::optional<HybridStream<VortexParticles>> perforated_;
  VortexParticles base_;
  CellVectorSource kMg_;
};

inline Vec2 velocity_field(const VortexParticles& p, const Setting& s, Vec2 x) { return VelocityField(p, s)(x); }

// --- stepping -------------------------------------------------------------------

enum class FlowStatus { running, halted_hole, halted_support };

inline const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::running: return "running";
    case FlowStatus::halted_hole: return "halted_hole";
    case FlowStatus::halted_support: return "halted_support";
  }
  return "?";
}

struct FlowState {
  double t = 0.0;
  VortexParticles particles;
  double support_distance = std::numeric_limits<double>::infinity();  ///< min distance to the medium box
  double margin = 0.0;                                                ///< delta of the initial support
  FlowStatus status = FlowStatus::running;
};

inline double support_distance(const VortexParticles& p, const std::optional<Rect>& box) {
  double d = std::numeric_limits<double>::infinity();
  if (box)
    for (Vec2 x : p.positions) d = std::min(d, box->distance(x));
  return d;
}

inline FlowState initial_state(VortexParticles p, const Setting& s, double margin) {
  FlowState st{0.0, std::move(p), 0.0, margin, FlowStatus::running};
  st.support_distance = support_distance(st.particles, medium_box(s));
  return st;
}

namespace detail {

inline bool any_in_hole(const std::vector<Vec2>& xs, const Setting& s) {
  const auto* ps = std::get_if<PerforatedSetting>(&s);
  if (!ps) return false;
  for (Vec2 x : xs)
    if (ps->config.hole_containing(x)) return true;
  return false;
}

inline std::vector<Vec2> particle_velocities(const VortexParticles& p, const Setting& s) {
  const VelocityField u(p, s);
  std::vector<Vec2> v(p.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(p.size()); ++i)
    v[static_cast<std::size_t>(i)] = u(p.positions[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace detail

/// One RK4 step. dt may be negative (time reversal). Throws when
/// |dt| max|u| exceeds half the smaller of the hole gap d - 2a and the
/// support margin; a particle entering a hole or coming within margin/2 of
/// the medium box halts the run (status set, state otherwise unchanged for
/// holes).
inline FlowState step(const FlowState& state, double dt, const Setting& s) {
  if (state.status != FlowStatus::running) return state;
  if (!(dt != 0.0) || !std::isfinite(dt)) throw InvalidArgument("step: dt must be finite and nonzero");
  const auto box = medium_box(s);
  FlowState next = state;
  if (detail::any_in_hole(state.particles.positions, s)) {
    next.status = FlowStatus::halted_hole;
    return next;
  }
  const auto k1 = detail::particle_velocities(state.particles, s);
  double limit = std::numeric_limits<double>::infinity();
  if (const auto* ps = std::get_if<PerforatedSetting>(&s); ps && ps->config.size() > 1)
    limit = std::min(limit, ps->config.d - 2.0 * ps->config.a);
  if (box && state.margin > 0.0) limit = std::min(limit, state.margin);
  double umax = 0.0;
  for (Vec2 v : k1) umax = std::max(umax, norm(v));
  if (std::abs(dt) * umax > 0.5 * limit)
    throw InvalidArgument("step: CFL violation, |dt| max|u| = " + std::to_string(std::abs(dt) * umax) +
                          " > " + std::to_string(0.5 * limit));

  auto shifted = [&](const std::vector<Vec2>& k, double c) {
    VortexParticles q = state.particles;
    for (std::size_t i = 0; i < q.size(); ++i) q.positions[i] += (c * dt) * k[i];
    return q;
  };
  std::vector<Vec2> stages[3];
  const double coef[3] = {0.5, 0.5, 1.0};
  const std::vector<Vec2>* prev = &k1;
  for (int m = 0; m < 3; ++m) {
    const VortexParticles q = shifted(*prev, coef[m]);
    if (detail::any_in_hole(q.positions, s)) {
      next.status = FlowStatus::halted_hole;
      return next;
    }
    stages[m] = detail::particle_velocities(q, s);
    prev = &stages[m];
  }
  for (std::size_t i = 0; i < next.particles.size(); ++i)
    next.particles.positions[i] += (dt / 6.0) * (k1[i] + 2.0 * stages[0][i] + 2.0 * stages[1][i] + stages[2][i]);
  next.t = state.t + dt;
  next.support_distance = support_distance(next.particles, box);
  if (detail::any_in_hole(next.particles.positions, s)) {
    next.status = FlowStatus::halted_hole;
  } else if (box && next.support_distance < 0.5 * state.margin) {
    next.status = FlowStatus::halted_support;
  }
  return next;
}

// --- side-by-side runs -------------------------------------------------------------

struct ComparisonOptions {
  double horizon = 1.0;
  double dt = 0.1;
  int output_every = 1;
  Rect probe{};         ///< region O for the velocity difference
  int probe_points = 8; ///< per axis
  int omega_points = 32;
  int n_levels = 3;
  bool full_solve = false;
  double margin = 0.0;
};

struct ComparisonRecord {
  double t = 0.0;
  double traj_div_max = 0.0;
  double vel_diff_sup_O = 0.0;
  double smoothed_omega_diff = 0.0;
  FlowStatus perforated = FlowStatus::running;
  FlowStatus homogenized = FlowStatus::running;

  std::string status() const {
    if (perforated == FlowStatus::running && homogenized == FlowStatus::running) return "running";
    std::string s;
    if (perforated != FlowStatus::running) s += std::string("perforated:") + to_string(perforated);
    if (homogenized != FlowStatus::running) s += std::string(s.empty() ? "" : ";") + "homogenized:" + to_string(homogenized);
    return s;
  }
};

inline ComparisonRecord compare_states(const FlowState& a, const Setting& sa, const FlowState& b, const Setting& sb,
                                       const ComparisonOptions& opt) {
  ComparisonRecord r{a.t, 0.0, 0.0, 0.0, a.status, b.status};
  const auto& pa = a.particles;
  const auto& pb = b.particles;
  for (std::size_t i = 0; i < pa.size(); ++i) r.traj_div_max = std::max(r.traj_div_max, norm(pa.positions[i] - pb.positions[i]));
  if (opt.probe.valid() && opt.probe_points > 0) {
    const VelocityField ua(pa, sa), ub(pb, sb);
    const auto* ps = std::get_if<PerforatedSetting>(&sa);
    const int n = opt.probe_points;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec2 x{opt.probe.x0 + (i + 0.5) * opt.probe.width() / n, opt.probe.y0 + (j + 0.5) * opt.probe.height() / n};
        if (ps && ps->config.hole_containing(x)) continue;
        r.vel_diff_sup_O = std::max(r.vel_diff_sup_O, norm(ua(x) - ub(x)));
      }
  }
  if (pa.size() > 0 && pa.blob > 0.0 && opt.omega_points > 0) {
    Rect box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto* p : {&pa, &pb})
      for (Vec2 x : p->positions)
        box = {std::min(box.x0, x.x), std::min(box.y0, x.y), std::max(box.x1, x.x), std::max(box.y1, x.y)};
    const double pad = 3.0 * pa.blob;
    const int n = opt.omega_points;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec2 x{box.x0 - pad + (i + 0.5) * (box.width() + 2 * pad) / n,
                     box.y0 - pad + (j + 0.5) * (box.height() + 2 * pad) / n};
        r.smoothed_omega_diff = std::max(r.smoothed_omega_diff, std::abs(smoothed_vorticity(pa, x) - smoothed_vorticity(pb, x)));
      }
  }
  return r;
}

/// Evolves the perforated and homogenized systems from the same particles.
/// Records at t = 0 and every `output_every` steps; stops once either run halts.
inline std::vector<ComparisonRecord> run_comparison(const VortexParticles& p0, const PorousConfig& config,
                                                    const VolumeFraction& k, const EffectiveMatrix& M,
                                                    const ComparisonOptions& opt,
                                                    std::vector<FlowState>* finals = nullptr) {
  if (!(opt.dt > 0.0) || !(opt.horizon >= 0.0)) throw InvalidArgument("run_comparison: need dt > 0 and horizon >= 0");
  if (opt.output_every < 1) throw InvalidArgument("run_comparison: output_every must be >= 1");
  const Setting sa = PerforatedSetting{config, opt.n_levels};
  const Setting sb = HomogenizedSetting{k, M, config.empty() ? std::nullopt : std::optional<Rect>(config.kpm_box),
                                        opt.full_solve, 1e-10};
  FlowState a = initial_state(p0, sa, opt.margin), b = initial_state(p0, sb, opt.margin);
  std::vector<ComparisonRecord> out{compare_states(a, sa, b, sb, opt)};
  const int steps = static_cast<int>(std::llround(opt.horizon / opt.dt));
  for (int n = 1; n <= steps; ++n) {
    a = step(a, opt.dt, sa);
    b = step(b, opt.dt, sb);
    const bool halted = a.status != FlowStatus::running || b.status != FlowStatus::running;
    if (n % opt.output_every == 0 || n == steps || halted) {
      ComparisonRecord r;
      if (halted) {
        r = {std::max(a.t, b.t), 0.0, 0.0, 0.0, a.status, b.status};
        for (std::size_t i = 0; i < a.particles.size(); ++i)
          r.traj_div_max = std::max(r.traj_div_max, norm(a.particles.positions[i] - b.particles.positions[i]));
      } else {
        r = compare_states(a, sa, b, sb, opt);
      }
      out.push_back(r);
    }
    if (halted) break;
  }
  if (finals) *finals = {a, b};
  return out;
}

inline void write_series_csv(std::ostream& os, const std::vector<ComparisonRecord>& rs) {
  os << std::setprecision(17) << "t,traj_div_max,vel_diff_sup_O,smoothed_omega_diff,status\n";
  for (const auto& r : rs)
    os << r.t << ',' << r.traj_div_max << ',' << r.vel_diff_sup_O << ',' << r.smoothed_omega_diff << ',' << r.status()
       << '\n';
}

inline void write_snapshot_csv(std::ostream& os, const FlowState& s, bool header = true) {
  if (header) os << "t,x,y,w\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < s.particles.size(); ++i)
    os << s.t << ',' << s.particles.positions[i].x << ',' << s.particles.positions[i].y << ',' << s.particles.weights[i]
       << '\n';
}

}  // namespace perfhom
