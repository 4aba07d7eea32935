#include "escapekit/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace escapekit {

ConvexPolygon make_polygon(std::vector<Vec2> vertices) {
  const std::size_t n = vertices.size();
  if (n < 3) throw std::invalid_argument("degenerate shape: polygon needs at least 3 vertices");
  if (n > kMaxPolygonVertices) throw std::invalid_argument("polygon has too many vertices");

  double scale = 0.0;
  for (const Vec2& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y))
      throw std::invalid_argument("degenerate shape: non-finite vertex");
    scale = std::max(scale, length(v));
  }
  const double tol = 1e-12 * std::max(scale * scale, 1e-12);

  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(vertices[i], vertices[(i + 1) % n]);
  if (std::abs(area2) <= tol) throw std::invalid_argument("degenerate shape: zero area");

  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e0 = vertices[(i + 1) % n] - vertices[i];
    const Vec2 e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
    if (length_squared(e0) <= tol) throw std::invalid_argument("degenerate shape: repeated vertex");
    const double turn = cross(e0, e1);
    if (std::abs(turn) <= tol) throw std::invalid_argument("degenerate shape: collinear vertices");
    if (turn < 0.0) throw std::invalid_argument("non-convex or clockwise polygon");
  }

  ConvexPolygon poly;
  poly.vertices = std::move(vertices);
  poly.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = poly.vertices[(i + 1) % n] - poly.vertices[i];
    poly.normals.push_back(normalized(Vec2{e.y, -e.x}));
  }
  return poly;
}

ConvexPolygon make_box(double half_width, double half_height) {
  return make_polygon({{-half_width, -half_height},
                       {half_width, -half_height},
                       {half_width, half_height},
                       {-half_width, half_height}});
}

double bounding_radius(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape)) return c->radius;
  const auto& p = std::get<ConvexPolygon>(shape);
  double r = 0.0;
  for (const Vec2& v : p.vertices) r = std::max(r, length(v));
  return r;
}

double min_extent(const Shape& shape) {
  if (const auto* c = std::get_if<Circle>(&shape)) return 2.0 * c->radius;
  const auto& p = std::get<ConvexPolygon>(shape);
  // For a convex polygon the minimum width is attained along an edge normal.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.normals.size(); ++i) {
    const double base = dot(p.normals[i], p.vertices[i]);
    double deepest = 0.0;
    for (const Vec2& v : p.vertices) deepest = std::max(deepest, base - dot(p.normals[i], v));
    best = std::min(best, deepest);
  }
  return best;
}

}  // namespace escapekit
