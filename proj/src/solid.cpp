#include "packlab/solid.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace packlab {

Similarity Similarity::compose(const Similarity& other) const {
    // this(other(x)). With reflection M: z -> -z, note M R M is again a
    // rotation (conjugated quaternion with flipped x,y signs).
    Similarity out;
    out.scale = scale * other.scale;
    Quat r2 = other.rotation;
    bool ref2 = other.reflect;
    if (reflect) {
        // M * r2 = r2' * M  with r2' = M r2 M
        r2 = Quat{r2.w, -r2.x, -r2.y, r2.z};
    }
    out.rotation = rotation * r2;
    out.reflect = reflect != ref2;
    out.translation = apply(other.translation);
    return out;
}

ConvexSolid make_ball(double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("make_ball: radius must be positive");
    ConvexSolid s;
    s.kind_ = SolidKind::Ball;
    s.radius_ = radius;
    s.volume_ = 4.0 / 3.0 * M_PI * radius * radius * radius;
    s.diameter_ = 2.0 * radius;
    s.circumradius_ = radius;
    std::ostringstream os;
    os << std::setprecision(17) << "ball:r=" << radius;
    s.spec_ = os.str();
    return s;
}

ConvexSolid make_polytope(std::vector<Vec3> vertices, std::string spec) {
    Hull h = convex_hull(vertices);
    // recenter: body frame origin is the centroid
    std::vector<Vec3> centered;
    centered.reserve(h.vertices.size());
    for (const Vec3& v : h.vertices) centered.push_back(v - h.centroid);
    Hull hc = convex_hull(centered);

    ConvexSolid s;
    s.kind_ = SolidKind::Polytope;
    s.vertices_ = hc.vertices;
    s.facets_ = hc.facets;
    s.volume_ = hc.volume;
    double d2max = 0.0, rmax = 0.0;
    for (std::size_t i = 0; i < s.vertices_.size(); ++i) {
        rmax = std::max(rmax, s.vertices_[i].norm());
        for (std::size_t j = i + 1; j < s.vertices_.size(); ++j) {
            d2max = std::max(d2max, (s.vertices_[i] - s.vertices_[j]).norm2());
        }
    }
    s.diameter_ = std::sqrt(d2max);
    s.circumradius_ = rmax;
    s.spec_ = std::move(spec);
    return s;
}

ConvexSolid make_polytope_from_vertices(std::vector<Vec3> vertices) {
    return make_polytope(std::move(vertices), "polytope");
}

ConvexSolid ConvexSolid::ball(double radius) { return make_ball(radius); }
ConvexSolid ConvexSolid::polytope(std::vector<Vec3> vertices) {
    return make_polytope(std::move(vertices), "polytope");
}

const char* platonic_name(PlatonicKind kind) {
    switch (kind) {
        case PlatonicKind::Tetrahedron: return "tetrahedron";
        case PlatonicKind::Cube: return "cube";
        case PlatonicKind::Octahedron: return "octahedron";
        case PlatonicKind::Dodecahedron: return "dodecahedron";
        case PlatonicKind::Icosahedron: return "icosahedron";
    }
    return "?";
}

ConvexSolid make_platonic(PlatonicKind kind, double edge) {
    if (!(edge > 0.0)) throw std::invalid_argument("make_platonic: edge must be positive");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v;
    double scale = 1.0;
    switch (kind) {
        case PlatonicKind::Tetrahedron:
            v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
            scale = edge / (2.0 * std::sqrt(2.0));
            break;
        case PlatonicKind::Cube:
            for (int sx : {-1, 1})
                for (int sy : {-1, 1})
                    for (int sz : {-1, 1}) v.push_back({double(sx), double(sy), double(sz)});
            scale = edge / 2.0;
            break;
        case PlatonicKind::Octahedron:
            v = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            scale = edge / std::sqrt(2.0);
            break;
        case PlatonicKind::Dodecahedron: {
            const double ip = 1.0 / phi;
            for (int sx : {-1, 1})
                for (int sy : {-1, 1})
                    for (int sz : {-1, 1}) v.push_back({double(sx), double(sy), double(sz)});
            for (int a : {-1, 1})
                for (int b : {-1, 1}) {
                    v.push_back({0, a * ip, b * phi});
                    v.push_back({a * ip, b * phi, 0});
                    v.push_back({a * phi, 0, b * ip});
                }
            scale = edge / (2.0 * ip);  // edge of this embedding is 2/phi
            break;
        }
        case PlatonicKind::Icosahedron:
            for (int a : {-1, 1})
                for (int b : {-1, 1}) {
                    v.push_back({0, double(a), b * phi});
                    v.push_back({double(a), b * phi, 0});
                    v.push_back({b * phi, 0, double(a)});
                }
            scale = edge / 2.0;  // edge of this embedding is 2
            break;
    }
    for (Vec3& p : v) p *= scale;
    std::ostringstream os;
    os << std::setprecision(17) << platonic_name(kind) << ":edge=" << edge;
    return make_polytope(std::move(v), os.str());
}

Vec3 ConvexSolid::support(const Pose& pose, const Vec3& direction) const {
    double n2 = direction.norm2();
    if (!(n2 > 0.0)) throw std::invalid_argument("support: zero direction");
    if (kind_ == SolidKind::Ball) {
        return pose.translation + direction * (radius_ / std::sqrt(n2));
    }
    Vec3 d_body = pose.rotation.conjugate().rotate(direction);
    double best = -1e300;
    const Vec3* arg = nullptr;
    for (const Vec3& v : vertices_) {
        double s = v.dot(d_body);
        if (s > best) { best = s; arg = &v; }
    }
    return pose.apply(*arg);
}

ConvexSolid apply_similarity(const ConvexSolid& solid, const Similarity& sigma) {
    if (solid.is_ball()) {
        return make_ball(solid.radius() * sigma.scale);
    }
    std::vector<Vec3> v;
    v.reserve(solid.vertices().size());
    for (const Vec3& p : solid.vertices()) v.push_back(sigma.apply(p));
    return make_polytope_from_vertices(std::move(v));
}

ConvexSolid parse_solid_spec(const std::string& spec) {
    auto colon = spec.find(':');
    std::string name = colon == std::string::npos ? spec : spec.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

    auto param = [&](const std::string& key) {
        auto eq = rest.find('=');
        if (eq == std::string::npos || rest.substr(0, eq) != key)
            throw std::invalid_argument("solid spec '" + spec + "': expected " + key + "=<value>");
        return std::stod(rest.substr(eq + 1));
    };

    if (name == "ball" || name == "sphere") return make_ball(param("r"));
    if (name == "file") {
        std::ifstream in(rest);
        if (!in) throw std::invalid_argument("solid spec: cannot open vertex file " + rest);
        std::vector<Vec3> v;
        double x, y, z;
        while (in >> x >> y >> z) v.push_back({x, y, z});
        return make_polytope_from_vertices(std::move(v));
    }
    for (PlatonicKind k : {PlatonicKind::Tetrahedron, PlatonicKind::Cube, PlatonicKind::Octahedron,
                           PlatonicKind::Dodecahedron, PlatonicKind::Icosahedron}) {
        if (name == platonic_name(k)) return make_platonic(k, param("edge"));
    }
    throw std::invalid_argument("unknown solid spec: " + spec);
}

} // namespace packlab
