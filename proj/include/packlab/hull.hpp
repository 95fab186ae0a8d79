#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "packlab/vec3.hpp"

namespace packlab {

// Halfspace n . p <= offset with |n| = 1.
struct Plane {
    Vec3 normal;
    double offset = 0.0;

    double slack(const Vec3& p) const { return offset - normal.dot(p); }
};

// Convex hull of a 3D point set with outward-oriented triangles.
struct Hull {
    std::vector<Vec3> vertices;               // hull vertices only
    std::vector<std::array<int, 3>> tris;     // indices into vertices, CCW from outside
    std::vector<Plane> facets;                // deduplicated facet planes
    double volume = 0.0;
    Vec3 centroid;                            // solid centroid
};

// Throws std::invalid_argument on degenerate (flat) input.
Hull convex_hull(const std::vector<Vec3>& points);

} // namespace packlab
