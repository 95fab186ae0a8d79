#include "packlab/separation.hpp"

#include <algorithm>
#include <cmath>

namespace packlab {

namespace {

// Support of the "core" of a solid: the ball collapses to its center point,
// so gap = core_distance - (rA + rB) is exact whenever the cores are disjoint.
inline Vec3 core_support(const ConvexSolid& s, const Pose& pose, const Vec3& dir) {
    if (s.is_ball()) return pose.translation;
    return s.support(pose, dir);
}

inline double core_radius(const ConvexSolid& s) { return s.is_ball() ? s.radius() : 0.0; }

struct GjkState {
    Vec3 pts[4];
    int n = 0;
};

// Closest point to the origin on the current simplex; reduces the simplex to
// the supporting feature. Standard barycentric case analysis.
Vec3 simplex_closest(GjkState& s) {
    auto seg = [](const Vec3& a, const Vec3& b, double& t) {
        Vec3 ab = b - a;
        double denom = ab.norm2();
        t = denom > 0 ? std::clamp(-a.dot(ab) / denom, 0.0, 1.0) : 0.0;
        return a + ab * t;
    };

    if (s.n == 1) return s.pts[0];

    if (s.n == 2) {
        double t;
        Vec3 p = seg(s.pts[0], s.pts[1], t);
        if (t <= 0.0) s.n = 1;
        else if (t >= 1.0) { s.pts[0] = s.pts[1]; s.n = 1; }
        return p;
    }

    auto tri = [&](const Vec3& a, const Vec3& b, const Vec3& c, int keep[3], int& kn) {
        Vec3 ab = b - a, ac = c - a, ap = -a;
        double d1 = ab.dot(ap), d2 = ac.dot(ap);
        if (d1 <= 0 && d2 <= 0) { kn = 1; keep[0] = 0; return a; }
        Vec3 bp = -b;
        double d3 = ab.dot(bp), d4 = ac.dot(bp);
        if (d3 >= 0 && d4 <= d3) { kn = 1; keep[0] = 1; return b; }
        double vc = d1 * d4 - d3 * d2;
        if (vc <= 0 && d1 >= 0 && d3 <= 0) {
            double t = d1 / (d1 - d3);
            kn = 2; keep[0] = 0; keep[1] = 1;
            return a + ab * t;
        }
        Vec3 cp = -c;
        double d5 = ab.dot(cp), d6 = ac.dot(cp);
        if (d6 >= 0 && d5 <= d6) { kn = 1; keep[0] = 2; return c; }
        double vb = d5 * d2 - d1 * d6;
        if (vb <= 0 && d2 >= 0 && d6 <= 0) {
            double t = d2 / (d2 - d6);
            kn = 2; keep[0] = 0; keep[1] = 2;
            return a + ac * t;
        }
        double va = d3 * d6 - d5 * d4;
        if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
            double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            kn = 2; keep[0] = 1; keep[1] = 2;
            return b + (c - b) * t;
        }
        double denom = 1.0 / (va + vb + vc);
        kn = 3; keep[0] = 0; keep[1] = 1; keep[2] = 2;
        return a + ab * (vb * denom) + ac * (vc * denom);
    };

    if (s.n == 3) {
        int keep[3], kn;
        Vec3 p = tri(s.pts[0], s.pts[1], s.pts[2], keep, kn);
        Vec3 kept[3];
        for (int i = 0; i < kn; ++i) kept[i] = s.pts[keep[i]];
        for (int i = 0; i < kn; ++i) s.pts[i] = kept[i];
        s.n = kn;
        return p;
    }

    // tetrahedron: origin inside, or closest over the faces not facing away
    auto side = [](const Vec3& p, const Vec3& q, const Vec3& r, const Vec3& opp) {
        Vec3 n = (q - p).cross(r - p);
        double s0 = n.dot(-p);         // origin side
        double s1 = n.dot(opp - p);    // fourth vertex side
        return s0 * s1 < 0;            // origin outside this face
    };
    bool outside = false;
    double best = 1e300;
    Vec3 bestp;
    GjkState bestsimplex;
    const int faces[4][4] = {{0, 1, 2, 3}, {0, 1, 3, 2}, {0, 2, 3, 1}, {1, 2, 3, 0}};
    auto scan = [&](bool filtered) {
        for (const auto& f : faces) {
            if (filtered && !side(s.pts[f[0]], s.pts[f[1]], s.pts[f[2]], s.pts[f[3]])) continue;
            outside = true;
            int keep[3], kn;
            Vec3 p = tri(s.pts[f[0]], s.pts[f[1]], s.pts[f[2]], keep, kn);
            double d2 = p.norm2();
            if (d2 < best) {
                best = d2;
                bestp = p;
                bestsimplex.n = kn;
                for (int i = 0; i < kn; ++i) bestsimplex.pts[i] = s.pts[f[keep[i]]];
            }
        }
    };
    scan(true);
    if (!outside) {
        // enclosure is a proof of overlap, so it must not rest on the sign of
        // a near-zero volume: a flat tetrahedron cannot certify it. Fall back
        // to the closest point over all four faces instead.
        Vec3 e1 = s.pts[1] - s.pts[0], e2 = s.pts[2] - s.pts[0], e3 = s.pts[3] - s.pts[0];
        double vol6 = std::abs(e1.cross(e2).dot(e3));
        double L = std::max({e1.norm(), e2.norm(), e3.norm()});
        if (vol6 > 1e-10 * L * L * L) { s.n = 4; return {0, 0, 0}; }  // origin enclosed
        scan(false);
    }
    s = bestsimplex;
    return bestp;
}

// Distance between the cores. Returns 0 when the cores touch or overlap.
// direction_out (unit, from B toward A) is set when the distance is positive.
double core_distance(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b, const Pose& pb,
                     Vec3* direction_out) {
    const double scale = std::max({a.diameter(), b.diameter(),
                                   (pa.translation - pb.translation).norm(), 1e-300});
    const double rel_tol = 1e-12 * scale;

    auto support = [&](const Vec3& dir) {
        return core_support(a, pa, dir) - core_support(b, pb, -dir);
    };

    GjkState s;
    s.pts[0] = support(Vec3{1, 0, 0});
    s.n = 1;
    Vec3 v = s.pts[0];

    double prev_vn = 1e300;
    double best_lb = -1e300;   // best supporting-plane certificate seen so far
    Vec3 u_best{1, 0, 0};      // direction the certificate holds along
    for (int iter = 0; iter < 128; ++iter) {
        double vn = v.norm();
        if (vn < rel_tol) return 0.0;
        Vec3 w = support(-v);
        // supporting-plane lower bound on the true distance: every point of
        // the difference body lies on the far side of the plane through w.
        // ||v|| is always an upper bound, so [best_lb, vn] brackets the answer
        double lb = v.dot(w) / vn;
        if (lb > best_lb) {
            best_lb = lb;
            u_best = v / vn;
        }
        // termination: bracket closed to tolerance. The reported direction is
        // the certificate's: the plane through w with that normal separates
        // the bodies by at least (result - rel_tol)
        if (vn - best_lb <= rel_tol) {
            if (direction_out) *direction_out = u_best;
            return vn;
        }
        // numerical stagnation (||v|| is non-increasing in exact arithmetic)
        // or a cycling support point: the simplex cannot improve further.
        // Return the certified lower bound: under-reporting a gap is safe for
        // callers that step or certify by it, over-reporting is not.
        bool dup = false;
        for (int i = 0; i < s.n; ++i)
            if ((s.pts[i] - w).norm2() <= rel_tol * rel_tol) dup = true;
        if (dup || vn >= prev_vn - rel_tol) {
            if (direction_out) *direction_out = u_best;
            return std::clamp(best_lb, 0.0, vn);
        }
        prev_vn = vn;
        s.pts[s.n++] = w;
        v = simplex_closest(s);
        if (s.n == 4) return 0.0;  // origin enclosed
    }
    throw SeparationError("separation: GJK did not converge");
}

// Upper-bound penetration depth of the full bodies by direction sampling.
double penetration_estimate(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b,
                            const Pose& pb, Vec3* direction_out) {
    // h_D(u) with D = A - B: furthest reach of the difference body along u
    auto hD = [&](const Vec3& u) {
        return u.dot(a.support(pa, u) - b.support(pb, -u));
    };

    std::vector<Vec3> dirs;
    // posed facet normals of both bodies, both signs
    auto add_facets = [&](const ConvexSolid& s, const Pose& p) {
        for (const Plane& f : s.facets()) {
            Vec3 n = p.rotation.rotate(f.normal);
            dirs.push_back(n);
            dirs.push_back(-n);
        }
    };
    add_facets(a, pa);
    add_facets(b, pb);
    // cross products of facet normals across the two bodies: edge-edge
    // contacts separate along an axis orthogonal to one edge of each body
    // (exact for boxes, where edges run along facet normals)
    std::size_t na = a.facets().size() * 2;
    std::size_t nb = dirs.size() - na;
    for (std::size_t i = 0; i < na; i += 2)
        for (std::size_t j = na; j < na + nb; j += 2) {
            Vec3 c = dirs[i].cross(dirs[j]);
            if (c.norm2() < 1e-20) continue;
            c = c.normalized();
            dirs.push_back(c);
            dirs.push_back(-c);
        }
    // center-to-center and axis fallbacks
    Vec3 cc = pa.translation - pb.translation;
    if (cc.norm2() > 0) { dirs.push_back(cc.normalized()); dirs.push_back(-cc.normalized()); }
    dirs.push_back({1, 0, 0});
    dirs.push_back({0, 1, 0});
    dirs.push_back({0, 0, 1});
    dirs.push_back({-1, 0, 0});
    dirs.push_back({0, -1, 0});
    dirs.push_back({0, 0, -1});

    double depth = 1e300;
    Vec3 umin{0, 0, 1};
    for (const Vec3& u : dirs) {
        double h = hD(u);
        if (h < depth) { depth = h; umin = u; }
    }
    if (direction_out) *direction_out = -umin;
    return std::max(depth, 0.0);
}

} // namespace

double distance_or_zero(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b,
                        const Pose& pb, Vec3* direction_out) {
    // ball-ball closed form
    if (a.is_ball() && b.is_ball()) {
        Vec3 delta = pa.translation - pb.translation;
        double dist = delta.norm();
        if (direction_out) {
            *direction_out = dist > 0 ? delta / dist : Vec3{0, 0, 1};
        }
        return std::max(0.0, dist - a.radius() - b.radius());
    }
    Vec3 dir;
    double core = core_distance(a, pa, b, pb, &dir);
    double gap = core - core_radius(a) - core_radius(b);
    if (direction_out) *direction_out = dir;
    return std::max(0.0, gap);
}

bool overlaps(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b, const Pose& pb,
              double clearance) {
    if (a.is_ball() && b.is_ball()) {
        double rsum = a.radius() + b.radius() + clearance;
        return (pa.translation - pb.translation).norm2() < rsum * rsum;
    }
    Vec3 dir;
    double core = core_distance(a, pa, b, pb, &dir);
    return core - core_radius(a) - core_radius(b) < clearance;
}

SeparationResult separation(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b,
                            const Pose& pb) {
    if (a.is_ball() && b.is_ball()) {
        Vec3 delta = pa.translation - pb.translation;
        double dist = delta.norm();
        SeparationResult r;
        r.gap = dist - a.radius() - b.radius();
        r.witness_direction = dist > 0 ? delta / dist : Vec3{0, 0, 1};
        return r;
    }
    Vec3 dir;
    double core = core_distance(a, pa, b, pb, &dir);
    double rsum = core_radius(a) + core_radius(b);
    SeparationResult r;
    if (core > rsum && core > 0.0) {
        r.gap = core - rsum;
        r.witness_direction = dir;
        return r;
    }
    if (core > 0.0) {
        // cores disjoint, bodies overlap through the ball radius: exact depth
        r.gap = core - rsum;
        r.witness_direction = dir;
        return r;
    }
    double depth = penetration_estimate(a, pa, b, pb, &dir);
    r.gap = -depth;
    r.witness_direction = dir;
    return r;
}

} // namespace packlab
