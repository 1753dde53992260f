#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "coplanner/errors.hpp"

namespace coplanner {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

struct PolylineProjection {
  double s = 0.0;         // arc length of the closest point
  double distance = 0.0;  // unsigned distance to the polyline
  double lateral = 0.0;   // signed offset (left of travel direction positive)
  Vec2 point{};
  Vec2 tangent{};
};

// Piecewise-linear curve with cached cumulative arc length.
class Polyline {
 public:
  Polyline() = default;

  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw ValidationError("polyline needs at least 2 points");
    cum_.resize(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i) {
      cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
    }
  }

  const std::vector<Vec2>& points() const { return pts_; }
  std::size_t size() const { return pts_.size(); }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  Vec2 point_at(double s) const {
    const auto [i, u] = locate(s);
    return pts_[i] + (pts_[i + 1] - pts_[i]) * u;
  }

  Vec2 tangent_at(double s) const {
    const auto [i, u] = locate(s);
    (void)u;
    Vec2 d = pts_[i + 1] - pts_[i];
    const double n = d.norm();
    if (n < 1e-12) return {1.0, 0.0};
    return {d.x / n, d.y / n};
  }

  PolylineProjection project(const Vec2& p) const {
    PolylineProjection best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
      const Vec2 a = pts_[i];
      const Vec2 d = pts_[i + 1] - a;
      const double len2 = d.squared_norm();
      double u = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 q = a + d * u;
      const double dist = (p - q).norm();
      if (dist < best.distance) {
        best.distance = dist;
        best.point = q;
        best.s = cum_[i] + std::sqrt(len2) * u;
        const double n = std::sqrt(len2);
        best.tangent = n > 1e-12 ? Vec2{d.x / n, d.y / n} : Vec2{1.0, 0.0};
        best.lateral = best.tangent.cross(p - q) >= 0.0 ? dist : -dist;
      }
    }
    return best;
  }

 private:
  std::pair<std::size_t, double> locate(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
    i = std::min(i, pts_.size() - 2);
    const double seg = cum_[i + 1] - cum_[i];
    const double u = seg > 1e-12 ? (s - cum_[i]) / seg : 0.0;
    return {i, u};
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

}  // namespace coplanner
