#pragma once

#include <array>
#include <cstddef>

#include "escapekit/geometry.hpp"

namespace escapekit::dynamics {

/// One point of a contact manifold between shape A and shape B.
struct ManifoldPoint {
  Vec2 point;               // world position, midway between the two surfaces
  double separation = 0.0;  // signed gap along the normal; negative means overlap
};

/// Up to two contact points sharing one normal (pointing from A into B).
struct Manifold {
  Vec2 normal;
  std::array<ManifoldPoint, 2> points{};
  std::size_t count = 0;
};

/// Builds the manifold for every feature pair closer than `margin`.
/// Polygon pairs use separating axes plus reference-face clipping.
Manifold collide(const Shape& a, const Pose2& pose_a, const Shape& b, const Pose2& pose_b,
                 double margin);

/// Exact minimum distance between two convex shapes; 0 when touching or overlapping.
double shape_distance(const Shape& a, const Pose2& pose_a, const Shape& b, const Pose2& pose_b);

}  // namespace escapekit::dynamics
