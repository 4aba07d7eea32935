#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <variant>
#include <vector>

namespace escapekit {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
/// Angular velocity times lever arm: w x r.
constexpr Vec2 cross(double w, Vec2 r) { return {-w * r.y, w * r.x}; }
/// Left-hand perpendicular (rotate +90 degrees).
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
constexpr double length_squared(Vec2 a) { return dot(a, a); }
inline double length(Vec2 a) { return std::hypot(a.x, a.y); }

inline Vec2 normalized(Vec2 a) {
  const double len = length(a);
  return len > 0.0 ? a / len : Vec2{};
}

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

/// Shortest signed arc from b to a.
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  constexpr Vec2 position() const { return {x, y}; }
  Vec2 transform(Vec2 local) const { return position() + rotate(local, theta); }
  Vec2 inverse_transform(Vec2 world) const { return rotate(world - position(), -theta); }
  friend constexpr bool operator==(const Pose2&, const Pose2&) = default;
};

struct Twist2 {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;

  constexpr Vec2 linear() const { return {vx, vy}; }
  /// Velocity of a material point at offset r from the reference point.
  constexpr Vec2 point_velocity(Vec2 r) const { return linear() + cross(omega, r); }
  bool finite() const { return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(omega); }
  friend constexpr bool operator==(const Twist2&, const Twist2&) = default;
};

struct Circle {
  double radius = 0.0;
};

inline constexpr std::size_t kMaxPolygonVertices = 16;

/// Strictly convex polygon, counter-clockwise, in the body frame (origin at the CoM).
struct ConvexPolygon {
  std::vector<Vec2> vertices;
  std::vector<Vec2> normals;  // outward normal of edge i -> i+1
};

using Shape = std::variant<Circle, ConvexPolygon>;

/// Validates and builds a polygon. Throws std::invalid_argument on
/// degenerate (collinear / repeated vertices) or non-convex input.
ConvexPolygon make_polygon(std::vector<Vec2> vertices);
ConvexPolygon make_box(double half_width, double half_height);

double bounding_radius(const Shape& shape);
/// Smallest width of the shape over all directions (diameter for circles).
double min_extent(const Shape& shape);

inline double box_inertia(double mass, double width, double height) {
  return mass * (width * width + height * height) / 12.0;
}
inline double disk_inertia(double mass, double radius) { return 0.5 * mass * radius * radius; }

}  // namespace escapekit
