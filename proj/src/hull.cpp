#include "packlab/hull.hpp"

#include <algorithm>
#include <cmath>

namespace packlab {

namespace {

Vec3 tri_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    return (b - a).cross(c - a);
}

} // namespace

// Exhaustive facet-plane construction: O(n^3) over point triples with a
// one-sidedness test. Slower than quickhull but exact on the highly symmetric
// inputs this code lives on (Platonic solids, clipped sections), where
// incremental algorithms routinely mishandle coplanar points. All callers use
// small point sets (tens of vertices).
Hull convex_hull(const std::vector<Vec3>& points) {
    const int n = int(points.size());
    if (n < 4) throw std::invalid_argument("convex_hull: need at least 4 points");

    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const double scale = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
    if (scale <= 0.0) throw std::invalid_argument("convex_hull: all points coincide");
    const double eps = 1e-9 * scale;

    // Degeneracy checks: farthest point from a line, then from a plane.
    {
        int i0 = 0, i1 = 0;
        for (int i = 1; i < n; ++i) {
            if (points[i].x < points[i0].x) i0 = i;
            if (points[i].x > points[i1].x) i1 = i;
        }
        if (i0 == i1) i1 = (i0 + 1) % n;
        Vec3 dir = points[i1] - points[i0];
        double best = -1.0;
        int i2 = -1;
        for (int i = 0; i < n; ++i) {
            double d2 = (points[i] - points[i0]).cross(dir).norm2();
            if (d2 > best) { best = d2; i2 = i; }
        }
        if (best <= eps * eps * dir.norm2())
            throw std::invalid_argument("convex_hull: collinear input");
        Vec3 nrm = tri_normal(points[i0], points[i1], points[i2]);
        best = -1.0;
        for (int i = 0; i < n; ++i)
            best = std::max(best, std::fabs(nrm.dot(points[i] - points[i0])));
        if (best <= eps * nrm.norm())
            throw std::invalid_argument("convex_hull: coplanar input");
    }

    // Candidate facet planes from all triples with every point on one side.
    std::vector<Plane> planes;
    auto known = [&](const Vec3& nn, double oo) {
        for (const Plane& p : planes)
            if (p.normal.dot(nn) > 1.0 - 1e-9 && std::fabs(p.offset - oo) < eps) return true;
        return false;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            for (int k = j + 1; k < n; ++k) {
                Vec3 nn = tri_normal(points[i], points[j], points[k]);
                double len = nn.norm();
                if (len < 1e-12 * scale * scale) continue;
                nn = nn / len;
                double oo = nn.dot(points[i]);
                bool above = false, below = false;
                for (int t = 0; t < n && !(above && below); ++t) {
                    double s = nn.dot(points[t]) - oo;
                    if (s > eps) above = true;
                    else if (s < -eps) below = true;
                }
                if (above && below) continue;
                if (above) { nn = -nn; oo = -oo; }
                if (!known(nn, oo)) planes.push_back({nn, oo});
            }
        }
    }
    if (planes.size() < 4) throw std::invalid_argument("convex_hull: degenerate input");

    // Hull vertices: points incident to three planes with independent normals.
    Hull hull;
    std::vector<int> remap(std::size_t(n), -1);
    for (int i = 0; i < n; ++i) {
        std::vector<const Plane*> incident;
        for (const Plane& p : planes)
            if (std::fabs(p.slack(points[i])) <= eps) incident.push_back(&p);
        bool corner = false;
        for (std::size_t a = 0; a < incident.size() && !corner; ++a)
            for (std::size_t b = a + 1; b < incident.size() && !corner; ++b)
                for (std::size_t c = b + 1; c < incident.size() && !corner; ++c) {
                    double det = incident[a]->normal.dot(
                        incident[b]->normal.cross(incident[c]->normal));
                    if (std::fabs(det) > 1e-6) corner = true;
                }
        if (corner && remap[std::size_t(i)] < 0) {
            // drop exact duplicates of an already kept vertex
            bool dup = false;
            for (const Vec3& v : hull.vertices)
                if ((v - points[i]).norm() <= eps) { dup = true; break; }
            if (!dup) {
                remap[std::size_t(i)] = int(hull.vertices.size());
                hull.vertices.push_back(points[i]);
            }
        }
    }
    if (hull.vertices.size() < 4) throw std::invalid_argument("convex_hull: degenerate input");

    // Facet polygons: incident vertices sorted around the facet centroid,
    // fan-triangulated with outward orientation.
    for (const Plane& p : planes) {
        std::vector<int> ids;
        for (std::size_t vi = 0; vi < hull.vertices.size(); ++vi)
            if (std::fabs(p.slack(hull.vertices[vi])) <= eps) ids.push_back(int(vi));
        if (ids.size() < 3) continue;
        Vec3 c{0, 0, 0};
        for (int vi : ids) c += hull.vertices[std::size_t(vi)];
        c = c / double(ids.size());
        Vec3 u = p.normal.cross(std::fabs(p.normal.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0});
        u = u.normalized();
        Vec3 w = p.normal.cross(u);
        std::sort(ids.begin(), ids.end(), [&](int a, int b) {
            Vec3 da = hull.vertices[std::size_t(a)] - c;
            Vec3 db = hull.vertices[std::size_t(b)] - c;
            return std::atan2(da.dot(w), da.dot(u)) < std::atan2(db.dot(w), db.dot(u));
        });
        for (std::size_t t = 1; t + 1 < ids.size(); ++t) {
            std::array<int, 3> tri{ids[0], ids[t], ids[t + 1]};
            Vec3 nn = tri_normal(hull.vertices[std::size_t(tri[0])],
                                 hull.vertices[std::size_t(tri[1])],
                                 hull.vertices[std::size_t(tri[2])]);
            if (nn.dot(p.normal) < 0) std::swap(tri[1], tri[2]);
            hull.tris.push_back(tri);
        }
        hull.facets.push_back(p);
    }

    // Volume and centroid by signed tetrahedra against the origin.
    double vol6 = 0.0;
    Vec3 cw{0, 0, 0};
    for (const auto& t : hull.tris) {
        const Vec3& a = hull.vertices[std::size_t(t[0])];
        const Vec3& b = hull.vertices[std::size_t(t[1])];
        const Vec3& c = hull.vertices[std::size_t(t[2])];
        double v6 = a.dot(b.cross(c));
        vol6 += v6;
        cw += (a + b + c) * (v6 / 4.0);
    }
    hull.volume = vol6 / 6.0;
    if (hull.volume <= 0.0) throw std::invalid_argument("convex_hull: non-positive volume");
    hull.centroid = cw / vol6;
    return hull;
}

} // namespace packlab
