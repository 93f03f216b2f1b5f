#pragma once

// Basic value types shared by every module: planar vectors, 2x2 matrices,
// axis-aligned rectangles and the library's exception hierarchy.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace perfhom {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double norm2(Vec2 a) { return dot(a, a); }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
/// Perpendicular gradient convention: perp(g) = (-g_y, g_x).
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// Row-major 2x2 matrix.
struct Mat2 {
  double m11 = 0.0, m12 = 0.0, m21 = 0.0, m22 = 0.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 scaled_identity(double s) { return {s, 0.0, 0.0, s}; }

  constexpr Vec2 operator*(Vec2 v) const { return {m11 * v.x + m12 * v.y, m21 * v.x + m22 * v.y}; }
  friend constexpr Mat2 operator*(double s, Mat2 a) { return {s * a.m11, s * a.m12, s * a.m21, s * a.m22}; }
  friend constexpr Mat2 operator+(Mat2 a, Mat2 b) {
    return {a.m11 + b.m11, a.m12 + b.m12, a.m21 + b.m21, a.m22 + b.m22};
  }
  friend constexpr bool operator==(Mat2, Mat2) = default;
};

/// Closed axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  constexpr double width() const { return x1 - x0; }
  constexpr double height() const { return y1 - y0; }
  constexpr double area() const { return width() * height(); }
  constexpr Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  double diameter() const { return std::hypot(width(), height()); }
  constexpr bool valid() const { return x1 > x0 && y1 > y0; }
  constexpr bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  /// True when the closed disk B(c, r) lies inside the rectangle.
  constexpr bool contains_disk(Vec2 c, double r) const {
    return c.x - r >= x0 && c.x + r <= x1 && c.y - r >= y0 && c.y + r <= y1;
  }
  /// Euclidean distance from p to the rectangle (0 inside).
  double distance(Vec2 p) const {
    const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
    const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
    return std::hypot(dx, dy);
  }
  constexpr Rect inflated(double m) const { return {x0 - m, y0 - m, x1 + m, y1 + m}; }
  friend constexpr bool operator==(Rect, Rect) = default;
};

// Error hierarchy. Every library failure is one of these; the CLI maps
// ConfigError to exit code 2 and everything else to exit code 1.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by its arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A field was evaluated where it is not defined (inside a hole, off-grid).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iteration or factorization failed to deliver a usable answer.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

/// A run configuration is malformed or violates a geometric invariant.
class ConfigError : public Error {
 public:
  ConfigError(std::string invariant, const std::string& what)
      : Error(what), invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

}  // namespace perfhom
