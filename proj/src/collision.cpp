#include "escapekit/collision.hpp"

#include <algorithm>
#include <limits>

namespace escapekit::dynamics {
namespace {

struct WorldPolygon {
  std::array<Vec2, kMaxPolygonVertices> v{};
  std::array<Vec2, kMaxPolygonVertices> n{};
  std::size_t count = 0;
};

WorldPolygon to_world(const ConvexPolygon& poly, const Pose2& pose) {
  WorldPolygon out;
  out.count = poly.vertices.size();
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  for (std::size_t i = 0; i < out.count; ++i) {
    const Vec2 p = poly.vertices[i];
    const Vec2 q = poly.normals[i];
    out.v[i] = {pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y};
    out.n[i] = {c * q.x - s * q.y, s * q.x + c * q.y};
  }
  return out;
}

struct FaceQuery {
  std::size_t index = 0;
  double separation = -std::numeric_limits<double>::infinity();
};

// Largest separation of `b` from the faces of `a`.
FaceQuery max_separation(const WorldPolygon& a, const WorldPolygon& b) {
  FaceQuery best;
  for (std::size_t i = 0; i < a.count; ++i) {
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.count; ++j) s = std::min(s, dot(a.n[i], b.v[j] - a.v[i]));
    if (s > best.separation) {
      best.separation = s;
      best.index = i;
    }
  }
  return best;
}

struct ClipVertex {
  Vec2 p;
};

// Keeps the part of segment `in` with dot(normal, p) <= offset.
std::size_t clip_segment(const std::array<ClipVertex, 2>& in, std::array<ClipVertex, 2>& out,
                         Vec2 normal, double offset) {
  std::size_t count = 0;
  const double d0 = dot(normal, in[0].p) - offset;
  const double d1 = dot(normal, in[1].p) - offset;
  if (d0 <= 0.0) out[count++] = in[0];
  if (d1 <= 0.0) out[count++] = in[1];
  if (d0 * d1 < 0.0) {
    const double t = d0 / (d0 - d1);
    out[count++].p = in[0].p + t * (in[1].p - in[0].p);
  }
  return count;
}

Manifold collide_polygons(const ConvexPolygon& pa, const Pose2& xa, const ConvexPolygon& pb,
                          const Pose2& xb, double margin) {
  Manifold m;
  const WorldPolygon a = to_world(pa, xa);
  const WorldPolygon b = to_world(pb, xb);

  const FaceQuery qa = max_separation(a, b);
  if (qa.separation > margin) return m;
  const FaceQuery qb = max_separation(b, a);
  if (qb.separation > margin) return m;

  // Prefer A as the reference unless B's face is clearly better.
  constexpr double kFaceTolerance = 1e-9;
  const bool flip = qb.separation > qa.separation + kFaceTolerance;
  const WorldPolygon& ref = flip ? b : a;
  const WorldPolygon& inc = flip ? a : b;
  const std::size_t ref_face = flip ? qb.index : qa.index;

  const Vec2 ref_normal = ref.n[ref_face];
  std::size_t inc_face = 0;
  double min_dot = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < inc.count; ++j) {
    const double d = dot(ref_normal, inc.n[j]);
    if (d < min_dot) {
      min_dot = d;
      inc_face = j;
    }
  }

  std::array<ClipVertex, 2> incident{{{inc.v[inc_face]}, {inc.v[(inc_face + 1) % inc.count]}}};
  const Vec2 v11 = ref.v[ref_face];
  const Vec2 v12 = ref.v[(ref_face + 1) % ref.count];
  const Vec2 tangent = normalized(v12 - v11);
  const double front = dot(ref_normal, v11);
  const double side1 = -dot(tangent, v11);
  const double side2 = dot(tangent, v12);

  std::array<ClipVertex, 2> c1{};
  std::array<ClipVertex, 2> c2{};
  if (clip_segment(incident, c1, -tangent, side1) < 2) return m;
  if (clip_segment(c1, c2, tangent, side2) < 2) return m;

  m.normal = flip ? -ref_normal : ref_normal;
  for (const ClipVertex& cv : c2) {
    const double sep = dot(ref_normal, cv.p) - front;
    if (sep <= margin) {
      m.points[m.count].point = cv.p - 0.5 * sep * ref_normal;
      m.points[m.count].separation = sep;
      ++m.count;
    }
  }
  return m;
}

// Polygon A against circle B; normal from A to B.
Manifold collide_polygon_circle(const ConvexPolygon& pa, const Pose2& xa, double radius,
                                const Pose2& xb, double margin) {
  Manifold m;
  const WorldPolygon a = to_world(pa, xa);
  const Vec2 c = xb.position();

  std::size_t face = 0;
  double sep = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.count; ++i) {
    const double s = dot(a.n[i], c - a.v[i]);
    if (s > sep) {
      sep = s;
      face = i;
    }
  }
  if (sep > radius + margin) return m;

  const Vec2 v1 = a.v[face];
  const Vec2 v2 = a.v[(face + 1) % a.count];
  Vec2 normal = a.n[face];
  Vec2 surface_a = c - sep * normal;
  double gap = sep - radius;

  if (sep > 0.0) {
    const double u1 = dot(c - v1, v2 - v1);
    const double u2 = dot(c - v2, v1 - v2);
    if (u1 <= 0.0 || u2 <= 0.0) {
      const Vec2 corner = u1 <= 0.0 ? v1 : v2;
      const double dist = length(c - corner);
      if (dist - radius > margin) return m;
      normal = dist > 0.0 ? (c - corner) / dist : a.n[face];
      surface_a = corner;
      gap = dist - radius;
    }
  }
  const Vec2 surface_b = c - radius * normal;
  m.normal = normal;
  m.points[0].point = 0.5 * (surface_a + surface_b);
  m.points[0].separation = gap;
  m.count = 1;
  return m;
}

Manifold collide_circles(double ra, const Pose2& xa, double rb, const Pose2& xb, double margin) {
  Manifold m;
  const Vec2 d = xb.position() - xa.position();
  const double dist = length(d);
  const double gap = dist - ra - rb;
  if (gap > margin) return m;
  m.normal = dist > 0.0 ? d / dist : Vec2{1.0, 0.0};
  const Vec2 pa = xa.position() + ra * m.normal;
  const Vec2 pb = xb.position() - rb * m.normal;
  m.points[0].point = 0.5 * (pa + pb);
  m.points[0].separation = gap;
  m.count = 1;
  return m;
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = length_squared(ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return length(p - (a + t * ab));
}

double point_polygon_distance(Vec2 p, const WorldPolygon& poly) {
  bool inside = true;
  for (std::size_t i = 0; i < poly.count; ++i)
    if (dot(poly.n[i], p - poly.v[i]) > 0.0) inside = false;
  if (inside) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.count; ++i)
    best = std::min(best, segment_distance(p, poly.v[i], poly.v[(i + 1) % poly.count]));
  return best;
}

}  // namespace

Manifold collide(const Shape& a, const Pose2& pose_a, const Shape& b, const Pose2& pose_b,
                 double margin) {
  const auto* ca = std::get_if<Circle>(&a);
  const auto* cb = std::get_if<Circle>(&b);
  if (ca && cb) return collide_circles(ca->radius, pose_a, cb->radius, pose_b, margin);
  if (!ca && cb)
    return collide_polygon_circle(std::get<ConvexPolygon>(a), pose_a, cb->radius, pose_b, margin);
  if (ca && !cb) {
    Manifold m =
        collide_polygon_circle(std::get<ConvexPolygon>(b), pose_b, ca->radius, pose_a, margin);
    m.normal = -m.normal;
    return m;
  }
  return collide_polygons(std::get<ConvexPolygon>(a), pose_a, std::get<ConvexPolygon>(b), pose_b,
                          margin);
}

double shape_distance(const Shape& a, const Pose2& pose_a, const Shape& b, const Pose2& pose_b) {
  const auto* ca = std::get_if<Circle>(&a);
  const auto* cb = std::get_if<Circle>(&b);
  if (ca && cb) {
    return std::max(0.0, length(pose_b.position() - pose_a.position()) - ca->radius - cb->radius);
  }
  if (ca || cb) {
    const Shape& poly_shape = ca ? b : a;
    const Pose2& poly_pose = ca ? pose_b : pose_a;
    const Pose2& circle_pose = ca ? pose_a : pose_b;
    const double r = ca ? ca->radius : cb->radius;
    const WorldPolygon poly = to_world(std::get<ConvexPolygon>(poly_shape), poly_pose);
    return std::max(0.0, point_polygon_distance(circle_pose.position(), poly) - r);
  }
  const WorldPolygon pa = to_world(std::get<ConvexPolygon>(a), pose_a);
  const WorldPolygon pb = to_world(std::get<ConvexPolygon>(b), pose_b);
  if (max_separation(pa, pb).separation <= 0.0 && max_separation(pb, pa).separation <= 0.0)
    return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pa.count; ++i)
    for (std::size_t j = 0; j < pb.count; ++j)
      best = std::min(best, segment_distance(pa.v[i], pb.v[j], pb.v[(j + 1) % pb.count]));
  for (std::size_t j = 0; j < pb.count; ++j)
    for (std::size_t i = 0; i < pa.count; ++i)
      best = std::min(best, segment_distance(pb.v[j], pa.v[i], pa.v[(i + 1) % pa.count]));
  return best;
}

}  // namespace escapekit::dynamics
