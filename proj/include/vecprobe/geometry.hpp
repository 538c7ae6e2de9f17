#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace vecprobe {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend constexpr Vec2 operator*(Vec2 v, double s) { return {s * v.x, s * v.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;

  double norm() const { return std::hypot(x, y); }
};

using Trajectory = std::vector<Vec2>;

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Maps world coordinates into a local frame: local = R(-rotation) * (world - translation).
// Headings map as heading - rotation.
struct RigidTransform {
  Vec2 translation;
  double rotation = 0.0;

  Vec2 apply(Vec2 world) const { return rotate(world - translation, -rotation); }
  Vec2 apply_vector(Vec2 v) const { return rotate(v, -rotation); }
  double apply_heading(double heading) const { return wrap_angle(heading - rotation); }

  Vec2 invert(Vec2 local) const { return rotate(local, rotation) + translation; }

  bool is_identity() const { return translation.x == 0.0 && translation.y == 0.0 && rotation == 0.0; }

  // Transform equivalent to applying `first`, then `this`.
  RigidTransform after(const RigidTransform& first) const {
    // local = R(-r2)(R(-r1)(w - t1) - t2) = R(-(r1+r2))(w - t1 - R(r1) t2)
    return {first.translation + rotate(translation, first.rotation), first.rotation + rotation};
  }
};

}  // namespace vecprobe
