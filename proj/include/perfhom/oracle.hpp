#pragma once

// Reference solver for the exact perforated problem at small N:
//
//   psi = psi_0 + sum_l sum_{m=1..M} (a/r_l)^m (c_lm cos m th_l + s_lm sin m th_l)
//
// fitted by least squares so that psi is constant on every hole boundary.
// With no order-0 (log) terms each hole carries zero circulation, and the
// unknown boundary constants are eliminated by subtracting per-hole means.
//
// In complex form the hole-l correction is Re sum_m alpha_m w^m with
// w = a/(z - x_l) and alpha_m = c_m + i s_m.

#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

#include "json.hpp"

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/potential.hpp"

namespace perfhom {

enum class OracleSolver { automatic, qr, normal_equations };

struct OracleOptions {
  int order = 8;
  int pts_per_hole = 64;
  std::size_t max_holes = 64;     ///< desk-scale guard
  double residual_tol = 1e-8;     ///< residuals above this are flagged, not fatal
  OracleSolver solver = OracleSolver::automatic;
  int qr_max_unknowns = 1024;     ///< automatic picks QR up to this many unknowns
};

template <VorticitySource S>
struct MultipoleSolution {
  S base;
  PorousConfig config;
  int order = 0;
  int pts_per_hole = 0;
  /// per hole: alpha_1 .. alpha_M with alpha_m = c_m + i s_m
  std::vector<std::vector<std::complex<double>>> coeffs;
  std::vector<double> boundary_constants;
  double residual = 0.0;           ///< max |psi - hole mean| over collocation points
  bool residual_flagged = false;
  double condition = 1.0;          ///< |R_11| / |R_rr| (QR) or 1/rcond (normal equations)
  std::string solver;

  /// (c_1, s_1, c_2, s_2, ...) for hole l
  std::vector<double> real_coeffs(std::size_t l) const {
    std::vector<double> out;
    for (auto z : coeffs[l]) {
      out.push_back(z.real());
      out.push_back(z.imag());
    }
    return out;
  }
};

namespace detail {

inline void check_outside(const PorousConfig& c, Vec2 x) {
  if (auto l = c.hole_containing(x)) throw DomainError("oracle: point inside hole " + std::to_string(*l));
}

/// w^m for m = 1..M, w = a/(z - centre)
inline void powers(std::complex<double> w, int M, std::complex<double>* out) {
  std::complex<double> p = w;
  for (int m = 0; m < M; ++m) {
    out[m] = p;
    p *= w;
  }
}

inline Vec2 collocation_point(const PorousConfig& c, std::size_t l, int k, int P) {
  const double t = two_pi * k / P;
  return c.centers[l] + c.a * Vec2{std::cos(t), std::sin(t)};
}

}  // namespace detail

/// psi - psi_0 of a solution
template <VorticitySource S>
double oracle_correction(const MultipoleSolution<S>& s, Vec2 x) {
  detail::check_outside(s.config, x);
  const std::complex<double> z{x.x, x.y};
  double v = 0.0;
  for (std::size_t l = 0; l < s.coeffs.size(); ++l) {
    const std::complex<double> w = s.config.a / (z - std::complex<double>{s.config.centers[l].x, s.config.centers[l].y});
    std::complex<double> p = w, acc = 0.0;
    for (const auto& alpha : s.coeffs[l]) {
      acc += alpha * p;
      p *= w;
    }
    v += acc.real();
  }
  return v;
}

template <VorticitySource S>
Vec2 oracle_correction_grad(const MultipoleSolution<S>& s, Vec2 x) {
  detail::check_outside(s.config, x);
  const std::complex<double> z{x.x, x.y};
  std::complex<double> dF = 0.0;
  for (std::size_t l = 0; l < s.coeffs.size(); ++l) {
    const std::complex<double> w = s.config.a / (z - std::complex<double>{s.config.centers[l].x, s.config.centers[l].y});
    // d/dz alpha w^m = -(m/a) alpha w^{m+1}
    std::complex<double> p = w * w, acc = 0.0;
    int m = 1;
    for (const auto& alpha : s.coeffs[l]) {
      acc += static_cast<double>(m++) * alpha * p;
      p *= w;
    }
    dF -= acc / s.config.a;
  }
  return {dF.real(), -dF.imag()};
}

template <VorticitySource S>
double oracle_eval(const MultipoleSolution<S>& s, Vec2 x) {
  return psi0_eval(s.base, x) + oracle_correction(s, x);
}

template <VorticitySource S>
Vec2 oracle_grad(const MultipoleSolution<S>& s, Vec2 x) {
  return grad_psi0_eval(s.base, x) + oracle_correction_grad(s, x);
}

template <VorticitySource S>
Vec2 oracle_velocity(const MultipoleSolution<S>& s, Vec2 x) {
  return perp(oracle_grad(s, x));
}

template <VorticitySource S>
MultipoleSolution<S> solve_collocation(S f, const PorousConfig& c, const OracleOptions& opt = {}) {
  const int M = opt.order, P = opt.pts_per_hole;
  const std::size_t N = c.size();
  if (M < 1) throw InvalidArgument("solve_collocation: order must be >= 1");
  if (P < 4 * M) throw InvalidArgument("solve_collocation: need pts_per_hole >= 4 * order");
  if (N > opt.max_holes)
    throw InvalidArgument("solve_collocation: " + std::to_string(N) + " holes exceeds the guard of " +
                          std::to_string(opt.max_holes));
  for (std::size_t l = 0; l < N; ++l)
    if (support_meets_disk(f, c.centers[l], c.a))
      throw InvalidArgument("solve_collocation: vorticity support meets hole " + std::to_string(l));

  MultipoleSolution<S> sol{std::move(f), c, M, P, {}, {}, 0.0, false, 1.0, ""};
  sol.coeffs.assign(N, std::vector<std::complex<double>>(static_cast<std::size_t>(M)));
  sol.boundary_constants.assign(N, 0.0);
  if (N == 0) {
    sol.solver = "none";
    return sol;
  }

  const Eigen::Index cols = static_cast<Eigen::Index>(2 * M * N);
  const bool use_qr = opt.solver == OracleSolver::qr ||
                      (opt.solver == OracleSolver::automatic && cols <= opt.qr_max_unknowns);
  sol.solver = use_qr ? "colpiv_qr" : "normal_equations_llt";

  // psi_0 at all collocation points, then one mean-subtracted block per hole.
  Eigen::VectorXd psi0(static_cast<Eigen::Index>(N) * P);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(N) * P; ++r)
    psi0[r] = psi0_eval(sol.base, detail::collocation_point(c, static_cast<std::size_t>(r / P), static_cast<int>(r % P), P));

  auto block = [&](std::size_t p, Eigen::MatrixXd& B, Eigen::VectorXd& b) {
    B.resize(P, cols);
    b.resize(P);
    std::vector<std::complex<double>> pw(static_cast<std::size_t>(M));
    for (int k = 0; k < P; ++k) {
      const Vec2 y = detail::collocation_point(c, p, k, P);
      const std::complex<double> z{y.x, y.y};
      for (std::size_t l = 0; l < N; ++l) {
        detail::powers(c.a / (z - std::complex<double>{c.centers[l].x, c.centers[l].y}), M, pw.data());
        for (int m = 0; m < M; ++m) {
          const Eigen::Index col = static_cast<Eigen::Index>(l * 2 * M + 2 * m);
          B(k, col) = pw[static_cast<std::size_t>(m)].real();
          B(k, col + 1) = -pw[static_cast<std::size_t>(m)].imag();
        }
      }
      b[k] = -psi0[static_cast<Eigen::Index>(p) * P + k];
    }
    B.rowwise() -= B.colwise().mean();
    b.array() -= b.mean();
  };

  Eigen::VectorXd x;
  if (use_qr) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(N) * P, cols);
    Eigen::VectorXd rhs(A.rows());
#pragma omp parallel
    {
      Eigen::MatrixXd B;
      Eigen::VectorXd b;
#pragma omp for schedule(dynamic)
      for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(N); ++p) {
        block(static_cast<std::size_t>(p), B, b);
        A.middleRows(p * P, P) = B;
        rhs.segment(p * P, P) = b;
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const auto& R = qr.matrixR();
    const double r0 = std::abs(R(0, 0));
    sol.condition = r0 > 0 ? r0 / std::abs(R(cols - 1, cols - 1)) : std::numeric_limits<double>::infinity();
    if (qr.rank() < cols)
      throw NumericFailure("solve_collocation: rank " + std::to_string(qr.rank()) + " < " + std::to_string(cols) +
                           " unknowns (condition estimate " + std::to_string(sol.condition) + ")");
    x = qr.solve(rhs);
  } else {
    // Column-scaled normal equations, accumulated hole by hole.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(cols);
    Eigen::MatrixXd B;
    Eigen::VectorXd b;
    for (std::size_t p = 0; p < N; ++p) {
      block(p, B, b);
      G.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose());
      g.noalias() += B.transpose() * b;
    }
    Eigen::VectorXd scale = G.diagonal().cwiseSqrt();
    for (Eigen::Index k = 0; k < cols; ++k)
      if (!(scale[k] > 0.0)) throw NumericFailure("solve_collocation: empty column " + std::to_string(k));
    scale = scale.cwiseInverse();
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    G = scale.asDiagonal() * G * scale.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    sol.condition = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (llt.info() != Eigen::Success || rc < 1e-13)
      throw NumericFailure("solve_collocation: normal equations singular (condition estimate " +
                           std::to_string(sol.condition) + ")");
    x = scale.asDiagonal() * llt.solve(scale.asDiagonal() * g);
  }

  for (std::size_t l = 0; l < N; ++l)
    for (int m = 0; m < M; ++m) {
      const Eigen::Index col = static_cast<Eigen::Index>(l * 2 * M + 2 * m);
      sol.coeffs[l][static_cast<std::size_t>(m)] = {x[col], x[col + 1]};
    }

  for (std::size_t p = 0; p < N; ++p) {
    std::vector<double> v(static_cast<std::size_t>(P));
    double mean = 0.0;
    for (int k = 0; k < P; ++k) {
      v[static_cast<std::size_t>(k)] =
          psi0[static_cast<Eigen::Index>(p) * P + k] + oracle_correction(sol, detail::collocation_point(c, p, k, P));
      mean += v[static_cast<std::size_t>(k)];
    }
    mean /= P;
    sol.boundary_constants[p] = mean;
    for (double e : v) sol.residual = std::max(sol.residual, std::abs(e - mean));
  }
  if (!std::isfinite(sol.residual)) throw NumericFailure("solve_collocation: non-finite residual");
  sol.residual_flagged = sol.residual > opt.residual_tol;
  return sol;
}

/// Flux of grad psi through the circle of radius `radius` around hole l.
template <VorticitySource S>
double oracle_flux(const MultipoleSolution<S>& s, std::size_t l, double radius, int points = 256) {
  double flux = 0.0;
  for (int k = 0; k < points; ++k) {
    const double t = two_pi * (k + 0.5) / points;
    const Vec2 n{std::cos(t), std::sin(t)};
    flux += dot(oracle_grad(s, s.config.centers[l] + radius * n), n);
  }
  return flux * radius * two_pi / points;
}

/// Standard deviation of psi over `points` boundary points of hole l
/// (points offset by half a step from the collocation nodes).
template <VorticitySource S>
double boundary_std(const MultipoleSolution<S>& s, std::size_t l, int points = 128) {
  std::vector<double> v;
  double mean = 0.0;
  for (int k = 0; k < points; ++k) {
    const double t = two_pi * (k + 0.5) / points;
    v.push_back(oracle_eval(s, s.config.centers[l] + s.config.a * Vec2{std::cos(t), std::sin(t)}));
    mean += v.back();
  }
  mean /= points;
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  return std::sqrt(var / points);
}

template <VorticitySource S>
nlohmann::json to_json(const MultipoleSolution<S>& s, const std::string& config_hash = "") {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["order"] = s.order;
  j["pts_per_hole"] = s.pts_per_hole;
  j["residual"] = s.residual;
  j["residual_flagged"] = s.residual_flagged;
  j["condition"] = s.condition;
  j["solver"] = s.solver;
  j["boundary_constants"] = s.boundary_constants;
  nlohmann::json holes = nlohmann::json::array();
  for (std::size_t l = 0; l < s.coeffs.size(); ++l)
    holes.push_back({{"center", {s.config.centers[l].x, s.config.centers[l].y}}, {"coeffs", s.real_coeffs(l)}});
  j["holes"] = holes;
  return j;
}

}  // namespace perfhom
