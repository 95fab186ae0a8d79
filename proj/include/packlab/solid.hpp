#pragma once

#include <string>
#include <vector>

#include "packlab/hull.hpp"
#include "packlab/vec3.hpp"

namespace packlab {

enum class SolidKind { Ball, Polytope };

enum class PlatonicKind { Tetrahedron, Cube, Octahedron, Dodecahedron, Icosahedron };

// Rigid placement of a solid: p_world = rotation * p_body + translation.
struct Pose {
    Vec3 translation;
    Quat rotation = Quat::identity();

    static Pose at(const Vec3& t) { return {t, Quat::identity()}; }
    Vec3 apply(const Vec3& p_body) const { return rotation.rotate(p_body) + translation; }
};

// Element of the similarity group: x -> scale * rotation * (reflect? Rx : x) + translation.
// Reflection is mirroring across the xy-plane (z -> -z) before rotating.
struct Similarity {
    double scale = 1.0;
    Quat rotation = Quat::identity();
    bool reflect = false;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const {
        Vec3 q = reflect ? Vec3{p.x, p.y, -p.z} : p;
        return rotation.rotate(q) * scale + translation;
    }

    // this ∘ other (apply other first)
    Similarity compose(const Similarity& other) const;
};

// Immutable convex shape in body frame (centroid at the origin).
class ConvexSolid {
public:
    static ConvexSolid ball(double radius);
    static ConvexSolid polytope(std::vector<Vec3> vertices);

    SolidKind kind() const { return kind_; }
    bool is_ball() const { return kind_ == SolidKind::Ball; }
    double radius() const { return radius_; }
    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Plane>& facets() const { return facets_; }  // body frame, polytope only
    double volume() const { return volume_; }
    double diameter() const { return diameter_; }
    double circumradius() const { return circumradius_; }  // max distance from centroid

    // Extreme point of the posed solid in the given direction (need not be unit).
    Vec3 support(const Pose& pose, const Vec3& direction) const;

    // Support function value h(direction) of the posed solid, direction unit.
    double support_value(const Pose& pose, const Vec3& direction) const {
        return direction.dot(support(pose, direction));
    }

    std::string spec_string() const { return spec_; }

private:
    ConvexSolid() = default;

    SolidKind kind_ = SolidKind::Ball;
    double radius_ = 0.0;
    std::vector<Vec3> vertices_;
    std::vector<Plane> facets_;
    double volume_ = 0.0;
    double diameter_ = 0.0;
    double circumradius_ = 0.0;
    std::string spec_;

    friend ConvexSolid make_ball(double);
    friend ConvexSolid make_polytope(std::vector<Vec3>, std::string);
};

ConvexSolid make_ball(double radius);
ConvexSolid make_platonic(PlatonicKind kind, double edge);
ConvexSolid make_polytope_from_vertices(std::vector<Vec3> vertices);

ConvexSolid apply_similarity(const ConvexSolid& solid, const Similarity& sigma);

// CLI spec strings: "ball:r=1.0", "cube:edge=1.0", "tetrahedron:edge=2",
// ..., "file:/path/to/verts.txt" (one "x y z" per line).
ConvexSolid parse_solid_spec(const std::string& spec);

const char* platonic_name(PlatonicKind kind);

} // namespace packlab
