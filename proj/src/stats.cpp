#include "packlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>

namespace packlab {

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t h = CounterRng::mix64(std::uint64_t(k.x) * 0x9E3779B97F4A7C15ull);
        h ^= CounterRng::mix64(std::uint64_t(k.y) + 0xBF58476D1CE4E5B9ull);
        h ^= CounterRng::mix64(std::uint64_t(k.z) + 0x94D049BB133111EBull);
        return std::size_t(h);
    }
};

CellKey key_of(const Vec3& p, double cell) {
    return {std::int64_t(std::floor(p.x / cell)), std::int64_t(std::floor(p.y / cell)),
            std::int64_t(std::floor(p.z / cell))};
}

using PointGrid = std::unordered_map<CellKey, std::vector<int>, CellKeyHash>;

PointGrid build_grid(const std::vector<Vec3>& pts, double cell) {
    PointGrid g;
    g.reserve(pts.size());
    for (int i = 0; i < int(pts.size()); ++i) g[key_of(pts[i], cell)].push_back(i);
    return g;
}

} // namespace

Cluster interior_cluster(const PackingState& state, double margin) {
    Cluster c;
    c.d = state.solid.diameter();
    c.margin = margin;
    c.all.reserve(state.count());
    for (const Pose& p : state.poses) c.all.push_back(p.translation);
    const double top = fill_height(state) - margin;
    for (const Vec3& x : c.all)
        if (x.z <= top && state.container.inside_ball(x, margin, 0.0)) c.base.push_back(x);
    return c;
}

double radial_count(const Cluster& cluster, double x) {
    if (x < 0) throw std::invalid_argument("radial_count: x must be >= 0");
    if (cluster.empty()) throw std::invalid_argument("radial_count: empty cluster");
    const double rr = (1.0 + x) * cluster.d;
    const double rr2 = rr * rr;
    PointGrid grid = build_grid(cluster.all, rr);
    std::uint64_t total = 0;
    for (const Vec3& b : cluster.base) {
        CellKey k = key_of(b, rr);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        double d2 = (cluster.all[j] - b).norm2();
                        if (d2 > 0.0 && d2 <= rr2) ++total;
                    }
                }
    }
    return double(total) / double(cluster.base.size());
}

std::vector<std::pair<double, double>> radial_profile(const Cluster& cluster,
                                                      const std::vector<double>& x_grid) {
    std::vector<std::pair<double, double>> out;
    out.reserve(x_grid.size());
    for (double x : x_grid) out.emplace_back(x, radial_count(cluster, x));
    return out;
}

double contact_number(const Cluster& cluster, double tau) {
    return radial_count(cluster, tau);
}

namespace {

// Convex polyhedron as a set of planar polygons, clipped in place against
// half-spaces n . p <= off.
struct ClipPoly {
    std::vector<std::vector<Vec3>> faces;
    std::vector<int> tags;  // -1: bounding box face, otherwise neighbor index
};

ClipPoly make_box(const Vec3& c, double h) {
    ClipPoly p;
    auto v = [&](int sx, int sy, int sz) { return c + Vec3{sx * h, sy * h, sz * h}; };
    p.faces = {
        {v(-1, -1, -1), v(-1, 1, -1), v(1, 1, -1), v(1, -1, -1)},   // z-
        {v(-1, -1, 1), v(1, -1, 1), v(1, 1, 1), v(-1, 1, 1)},       // z+
        {v(-1, -1, -1), v(1, -1, -1), v(1, -1, 1), v(-1, -1, 1)},   // y-
        {v(-1, 1, -1), v(-1, 1, 1), v(1, 1, 1), v(1, 1, -1)},       // y+
        {v(-1, -1, -1), v(-1, -1, 1), v(-1, 1, 1), v(-1, 1, -1)},   // x-
        {v(1, -1, -1), v(1, 1, -1), v(1, 1, 1), v(1, -1, 1)},       // x+
    };
    p.tags.assign(6, -1);
    return p;
}

// Clip by n . p <= off; eps is the absolute tolerance for "on the plane".
void clip(ClipPoly& poly, const Vec3& n, double off, int tag, double eps) {
    std::vector<std::vector<Vec3>> kept;
    std::vector<int> kept_tags;
    std::vector<Vec3> rim;  // intersection points, one pair per cut face
    for (std::size_t fi = 0; fi < poly.faces.size(); ++fi) {
        const auto& face = poly.faces[fi];
        std::vector<Vec3> out;
        bool any_out = false;
        for (std::size_t i = 0; i < face.size(); ++i) {
            const Vec3& a = face[i];
            const Vec3& b = face[(i + 1) % face.size()];
            double sa = n.dot(a) - off, sb = n.dot(b) - off;
            if (sa <= eps) out.push_back(a);
            else any_out = true;
            if ((sa < -eps && sb > eps) || (sa > eps && sb < -eps)) {
                Vec3 x = a + (b - a) * (sa / (sa - sb));
                out.push_back(x);
                rim.push_back(x);
            }
        }
        if (out.size() >= 3) {
            kept.push_back(std::move(out));
            kept_tags.push_back(poly.tags[fi]);
        } else if (!out.empty() || any_out) {
            // face fully removed
        }
    }
    if (!rim.empty()) {
        // order the rim points around the cut plane to form the new face
        Vec3 c{0, 0, 0};
        for (const Vec3& p : rim) c = c + p;
        c = c * (1.0 / double(rim.size()));
        Vec3 u = n.cross(std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0});
        u = u * (1.0 / u.norm());
        Vec3 w = n.cross(u);
        std::sort(rim.begin(), rim.end(), [&](const Vec3& a, const Vec3& b) {
            Vec3 da = a - c, db = b - c;
            return std::atan2(da.dot(w), da.dot(u)) < std::atan2(db.dot(w), db.dot(u));
        });
        // drop duplicates introduced by edges lying on the plane
        std::vector<Vec3> face;
        for (const Vec3& p : rim)
            if (face.empty() || (p - face.back()).norm2() > eps * eps) face.push_back(p);
        if (face.size() >= 3 && (face.front() - face.back()).norm2() <= eps * eps)
            face.pop_back();
        if (face.size() >= 3) {
            kept.push_back(std::move(face));
            kept_tags.push_back(tag);
        }
    }
    poly.faces = std::move(kept);
    poly.tags = std::move(kept_tags);
}

double polygon_area(const std::vector<Vec3>& f) {
    Vec3 s{0, 0, 0};
    for (std::size_t i = 1; i + 1 < f.size(); ++i)
        s = s + (f[i] - f[0]).cross(f[i + 1] - f[0]);
    return 0.5 * s.norm();
}

} // namespace

VoronoiResult voronoi_cells(const Cluster& cluster, double cutoff) {
    if (cluster.empty()) throw std::invalid_argument("voronoi_cells: empty cluster");
    if (!(cutoff > 0)) throw std::invalid_argument("voronoi_cells: cutoff must be > 0");
    const double d = cluster.d;
    const double eps = 1e-12 * cutoff;
    const double min_area = 1e-10 * d * d;
    const double snap = 1e-7 * d;  // vertex identification grid
    PointGrid grid = build_grid(cluster.all, cutoff);

    VoronoiResult result;
    for (int bi = 0; bi < int(cluster.base.size()); ++bi) {
        const Vec3& c = cluster.base[bi];
        // neighbors within the cutoff, nearest first (prunes later clips fast)
        std::vector<std::pair<double, int>> nb;
        CellKey k = key_of(c, cutoff);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        double d2 = (cluster.all[j] - c).norm2();
                        if (d2 > 0.0 && d2 <= cutoff * cutoff) nb.emplace_back(d2, j);
                    }
                }
        std::sort(nb.begin(), nb.end());

        ClipPoly poly = make_box(c, cutoff);
        for (auto [d2, j] : nb) {
            Vec3 diff = cluster.all[j] - c;
            double len = std::sqrt(d2);
            Vec3 n = diff * (1.0 / len);
            clip(poly, n, n.dot(c) + 0.5 * len, j, eps);
            if (poly.faces.empty()) break;
        }

        VoronoiCell cell;
        cell.owner = bi;
        bool bounded = true;
        for (std::size_t fi = 0; fi < poly.faces.size(); ++fi) {
            if (polygon_area(poly.faces[fi]) < min_area) continue;
            if (poly.tags[fi] < 0) bounded = false;
            cell.faces.push_back(poly.faces[fi]);
        }
        if (!bounded || cell.faces.empty()) {
            ++result.excluded_unbounded;
            continue;
        }
        cell.face_count = int(cell.faces.size());

        // vertex / edge census on the snapped geometry
        std::unordered_map<CellKey, int, CellKeyHash> vid;
        auto snap_id = [&](const Vec3& p) {
            CellKey q{std::int64_t(std::llround(p.x / snap)), std::int64_t(std::llround(p.y / snap)),
                      std::int64_t(std::llround(p.z / snap))};
            auto [it, fresh] = vid.emplace(q, int(vid.size()));
            (void)fresh;
            return it->second;
        };
        std::unordered_map<std::uint64_t, int> edges;
        for (const auto& face : cell.faces) {
            std::vector<int> ids;
            for (const Vec3& p : face) {
                int id = snap_id(p);
                if (ids.empty() || ids.back() != id) ids.push_back(id);
            }
            while (ids.size() > 1 && ids.front() == ids.back()) ids.pop_back();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                int a = ids[i], b = ids[(i + 1) % ids.size()];
                if (a == b) continue;
                std::uint64_t key = (std::uint64_t(std::min(a, b)) << 32) | std::uint64_t(std::max(a, b));
                ++edges[key];
            }
        }
        cell.vertex_count = int(vid.size());
        cell.edge_count = int(edges.size());
        result.cells.push_back(std::move(cell));
    }
    return result;
}

bool cell_contains(const VoronoiCell& cell, const Cluster& cluster, const Vec3& p) {
    const Vec3& c = cluster.base[std::size_t(cell.owner)];
    double own = (p - c).norm2();
    double tol = 1e-9 * cluster.d * cluster.d;
    for (const Vec3& q : cluster.all) {
        if ((q - c).norm2() == 0.0) continue;
        if ((p - q).norm2() < own - tol) return false;
    }
    return true;
}

FaceHistogram face_number_distribution(const std::vector<VoronoiCell>& cells) {
    FaceHistogram h;
    h.cell_count = cells.size();
    if (cells.empty()) return h;
    std::map<int, int> counts;
    double sum = 0;
    for (const VoronoiCell& c : cells) {
        ++counts[c.face_count];
        sum += c.face_count;
    }
    int best = 0;
    for (auto [faces, n] : counts) {
        h.fraction[faces] = double(n) / double(cells.size());
        if (n > best) {
            best = n;
            h.mode = faces;
        }
    }
    h.mean = sum / double(cells.size());
    return h;
}

} // namespace packlab
