#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "packlab/hull.hpp"
#include "packlab/rng.hpp"
#include "packlab/solid.hpp"

using namespace packlab;

namespace {

// Closed-form volumes and circumradii for unit edge, frozen from the standard
// formulas V_tet = sqrt(2)/12, V_oct = sqrt(2)/3, V_dod = (15+7 sqrt(5))/4,
// V_ico = 5 (3+sqrt(5))/12 and the matching circumradius expressions.
struct PlatonicOracle {
    PlatonicKind kind;
    double volume;
    double circumradius;
    std::size_t n_vertices;
    std::size_t n_facets;
};

const PlatonicOracle kOracles[] = {
    {PlatonicKind::Tetrahedron, std::sqrt(2.0) / 12.0, std::sqrt(3.0 / 8.0), 4, 4},
    {PlatonicKind::Cube, 1.0, std::sqrt(3.0) / 2.0, 8, 6},
    {PlatonicKind::Octahedron, std::sqrt(2.0) / 3.0, std::sqrt(0.5), 6, 8},
    {PlatonicKind::Dodecahedron, (15.0 + 7.0 * std::sqrt(5.0)) / 4.0,
     (std::sqrt(3.0) / 4.0) * (1.0 + std::sqrt(5.0)), 20, 12},
    {PlatonicKind::Icosahedron, 5.0 * (3.0 + std::sqrt(5.0)) / 12.0,
     0.25 * std::sqrt(10.0 + 2.0 * std::sqrt(5.0)), 12, 20},
};

double max_pairwise_min_gap(const ConvexSolid& s) {
    // shortest edge of the vertex set = edge length for a Platonic solid
    const auto& v = s.vertices();
    double best = 1e300;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j)
            best = std::min(best, (v[i] - v[j]).norm());
    return best;
}

} // namespace

TEST_CASE("ball basic quantities") {
    ConvexSolid b = ConvexSolid::ball(0.75);
    CHECK(b.is_ball());
    CHECK(b.radius() == doctest::Approx(0.75));
    CHECK(b.diameter() == doctest::Approx(1.5));
    CHECK(b.circumradius() == doctest::Approx(0.75));
    CHECK(b.volume() == doctest::Approx(4.0 / 3.0 * M_PI * 0.75 * 0.75 * 0.75).epsilon(1e-12));

    Pose p = Pose::at({1, 2, 3});
    Vec3 s = b.support(p, {0, 0, 2});
    CHECK(s.x == doctest::Approx(1.0));
    CHECK(s.y == doctest::Approx(2.0));
    CHECK(s.z == doctest::Approx(3.75));
}

TEST_CASE("platonic solids match closed-form volume and circumradius") {
    for (const auto& o : kOracles) {
        ConvexSolid s = make_platonic(o.kind, 1.0);
        CAPTURE(platonic_name(o.kind));
        CHECK(s.volume() == doctest::Approx(o.volume).epsilon(1e-10));
        CHECK(s.circumradius() == doctest::Approx(o.circumradius).epsilon(1e-10));
        CHECK(s.vertices().size() == o.n_vertices);
        CHECK(s.facets().size() == o.n_facets);
        CHECK(max_pairwise_min_gap(s) == doctest::Approx(1.0).epsilon(1e-10));
        // centroid at the body origin
        Vec3 c{0, 0, 0};
        for (const Vec3& v : s.vertices()) c += v;
        c = c / double(s.vertices().size());
        CHECK(c.norm() < 1e-10);
    }
}

TEST_CASE("platonic volume scales with the cube of the edge") {
    for (const auto& o : kOracles) {
        ConvexSolid s = make_platonic(o.kind, 2.5);
        CHECK(s.volume() == doctest::Approx(o.volume * 2.5 * 2.5 * 2.5).epsilon(1e-10));
        CHECK(s.circumradius() == doctest::Approx(o.circumradius * 2.5).epsilon(1e-10));
    }
}

TEST_CASE("polytope support equals the best vertex under random poses") {
    CounterRng rng(91);
    ConvexSolid s = make_platonic(PlatonicKind::Dodecahedron, 1.0);
    for (int it = 0; it < 200; ++it) {
        Pose pose{rng.uniform_direction() * rng.uniform(0.0, 5.0), rng.uniform_rotation()};
        Vec3 dir = rng.uniform_direction();
        Vec3 sup = s.support(pose, dir);
        double best = -1e300;
        Vec3 best_v;
        for (const Vec3& v : s.vertices()) {
            Vec3 w = pose.apply(v);
            if (w.dot(dir) > best) {
                best = w.dot(dir);
                best_v = w;
            }
        }
        CHECK(sup.dot(dir) == doctest::Approx(best).epsilon(1e-12));
        CHECK((sup - best_v).norm() < 1e-9);
    }
}

TEST_CASE("support value is sublinear and symmetric-bounded") {
    CounterRng rng(17);
    ConvexSolid s = make_platonic(PlatonicKind::Icosahedron, 1.3);
    Pose pose{{0.4, -0.2, 1.1}, rng.uniform_rotation()};
    for (int it = 0; it < 100; ++it) {
        Vec3 u = rng.uniform_direction();
        // h(u) + h(-u) = width >= 0, and no vertex lies beyond the support plane
        double w = s.support_value(pose, u) + s.support_value(pose, -u);
        CHECK(w >= 0.0);
        double h = s.support_value(pose, u);
        for (const Vec3& v : s.vertices()) CHECK(pose.apply(v).dot(u) <= h + 1e-12);
    }
}

TEST_CASE("facet planes contain the solid with tight contact") {
    for (const auto& o : kOracles) {
        ConvexSolid s = make_platonic(o.kind, 1.0);
        for (const Plane& f : s.facets()) {
            CHECK(f.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
            double min_slack = 1e300;
            for (const Vec3& v : s.vertices()) {
                double sl = f.slack(v);
                CHECK(sl >= -1e-10);  // inside
                min_slack = std::min(min_slack, sl);
            }
            CHECK(min_slack < 1e-10);  // every facet touches the solid
        }
    }
}

TEST_CASE("convex hull of a cube point cloud") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i)
        pts.push_back({i & 1 ? 1.0 : 0.0, i & 2 ? 1.0 : 0.0, i & 4 ? 1.0 : 0.0});
    // interior and face points must not change the hull
    pts.push_back({0.5, 0.5, 0.5});
    pts.push_back({0.5, 0.5, 1.0});
    Hull h = convex_hull(pts);
    CHECK(h.vertices.size() == 8);
    CHECK(h.facets.size() == 6);
    CHECK(h.volume == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((h.centroid - Vec3{0.5, 0.5, 0.5}).norm() < 1e-12);
}

TEST_CASE("convex hull rejects degenerate input") {
    std::vector<Vec3> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    CHECK_THROWS_AS(convex_hull(line), std::invalid_argument);
    std::vector<Vec3> plane = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    CHECK_THROWS_AS(convex_hull(plane), std::invalid_argument);
}

TEST_CASE("hull volume agrees with Monte Carlo on a random polytope") {
    CounterRng rng(5);
    std::vector<Vec3> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(rng.uniform_direction() * rng.uniform(0.4, 1.0));
    Hull h = convex_hull(pts);
    // sample the bounding box [-1,1]^3
    std::size_t hits = 0;
    const std::size_t n = 200'000;
    for (std::size_t k = 0; k < n; ++k) {
        Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        bool in = true;
        for (const Plane& f : h.facets)
            if (f.slack(p) < 0) {
                in = false;
                break;
            }
        hits += in;
    }
    double mc = 8.0 * double(hits) / double(n);
    double se = 8.0 * std::sqrt(mc / 8.0 * (1 - mc / 8.0) / double(n));
    CHECK(std::abs(mc - h.volume) < 5 * se + 1e-6);
}

TEST_CASE("quaternion rotation preserves lengths and angles") {
    CounterRng rng(23);
    for (int it = 0; it < 100; ++it) {
        Quat q = rng.uniform_rotation();
        Vec3 a = rng.uniform_direction() * rng.uniform(0.1, 3.0);
        Vec3 b = rng.uniform_direction() * rng.uniform(0.1, 3.0);
        CHECK(q.rotate(a).norm() == doctest::Approx(a.norm()).epsilon(1e-12));
        CHECK(q.rotate(a).dot(q.rotate(b)) == doctest::Approx(a.dot(b)).epsilon(1e-10));
        // orientation preserved: determinant +1 via triple product
        Vec3 c = a.cross(b);
        CHECK(q.rotate(a).cross(q.rotate(b)).dot(q.rotate(c)) ==
              doctest::Approx(c.dot(c)).epsilon(1e-10));
    }
}

TEST_CASE("axis-angle rotation oracle") {
    Quat q = Quat::from_axis_angle({0, 0, 1}, M_PI / 2);
    Vec3 r = q.rotate({1, 0, 0});
    CHECK(r.x == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r.y == doctest::Approx(1.0));
    CHECK(r.z == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("similarity composition matches sequential application") {
    CounterRng rng(29);
    for (int it = 0; it < 50; ++it) {
        Similarity a{rng.uniform(0.3, 2.0), rng.uniform_rotation(), rng.uniform() < 0.5,
                     rng.uniform_direction() * rng.uniform(0.0, 2.0)};
        Similarity b{rng.uniform(0.3, 2.0), rng.uniform_rotation(), rng.uniform() < 0.5,
                     rng.uniform_direction() * rng.uniform(0.0, 2.0)};
        Similarity ab = a.compose(b);
        for (int k = 0; k < 5; ++k) {
            Vec3 p = rng.uniform_direction() * rng.uniform(0.0, 3.0);
            Vec3 lhs = ab.apply(p);
            Vec3 rhs = a.apply(b.apply(p));
            CHECK((lhs - rhs).norm() < 1e-10);
        }
    }
}

TEST_CASE("apply_similarity scales volume by the cube of the ratio") {
    CounterRng rng(31);
    ConvexSolid s = make_platonic(PlatonicKind::Octahedron, 1.0);
    Similarity sigma{1.7, rng.uniform_rotation(), false, {0.3, -0.8, 0.5}};
    ConvexSolid t = apply_similarity(s, sigma);
    CHECK(t.volume() == doctest::Approx(s.volume() * 1.7 * 1.7 * 1.7).epsilon(1e-10));
    CHECK(t.circumradius() == doctest::Approx(s.circumradius() * 1.7).epsilon(1e-10));

    Similarity mirror{1.0, Quat::identity(), true, {0, 0, 0}};
    ConvexSolid m = apply_similarity(s, mirror);
    CHECK(m.volume() == doctest::Approx(s.volume()).epsilon(1e-10));
}

TEST_CASE("solid spec strings parse and report errors") {
    ConvexSolid b = parse_solid_spec("ball:r=0.5");
    CHECK(b.is_ball());
    CHECK(b.radius() == doctest::Approx(0.5));

    ConvexSolid c = parse_solid_spec("cube:edge=2");
    CHECK(c.kind() == SolidKind::Polytope);
    CHECK(c.volume() == doctest::Approx(8.0).epsilon(1e-12));

    ConvexSolid t = parse_solid_spec("tetrahedron:edge=1");
    CHECK(t.volume() == doctest::Approx(std::sqrt(2.0) / 12.0).epsilon(1e-10));

    CHECK_THROWS_AS(parse_solid_spec("ball"), std::invalid_argument);
    CHECK_THROWS_AS(parse_solid_spec("ball:r=-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_solid_spec("pyramid:edge=1"), std::invalid_argument);
}

TEST_CASE("pose application is a rigid motion") {
    CounterRng rng(37);
    Pose pose{{1, -2, 0.5}, rng.uniform_rotation()};
    Vec3 a{0.3, 0.4, -0.1}, b{-1.0, 0.2, 0.9};
    CHECK((pose.apply(a) - pose.apply(b)).norm() == doctest::Approx((a - b).norm()).epsilon(1e-12));
}
