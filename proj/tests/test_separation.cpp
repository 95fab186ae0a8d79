#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "packlab/rng.hpp"
#include "packlab/separation.hpp"

using namespace packlab;

namespace {

Pose random_pose(CounterRng& rng, double spread) {
    return {rng.uniform_direction() * rng.uniform(0.0, spread), rng.uniform_rotation()};
}

// Supporting-plane lower bound: for any unit u, the bodies are at least
// -(h_A(-u) + h_B(u)) apart along u. Valid for disjoint bodies.
double direction_bound(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b,
                       const Pose& pb, CounterRng& rng, int n_dirs) {
    double best = -1e300;
    for (int k = 0; k < n_dirs; ++k) {
        Vec3 u = rng.uniform_direction();
        best = std::max(best, -(a.support_value(pa, u * -1.0) + b.support_value(pb, u)));
    }
    return best;
}

// Upper bound by sampling boundary points of both bodies.
double sampled_distance(const ConvexSolid& a, const Pose& pa, const ConvexSolid& b,
                        const Pose& pb, CounterRng& rng, int n_dirs) {
    double best = 1e300;
    for (int k = 0; k < n_dirs; ++k) {
        Vec3 u = rng.uniform_direction();
        Vec3 pa_pt = a.support(pa, u);
        Vec3 pb_pt = b.support(pb, u * -1.0);
        best = std::min(best, (pa_pt - pb_pt).norm());
    }
    return best;
}

} // namespace

TEST_CASE("ball-ball separation is the closed form") {
    CounterRng rng(101);
    ConvexSolid a = ConvexSolid::ball(0.5), b = ConvexSolid::ball(0.8);
    for (int it = 0; it < 300; ++it) {
        Pose pa = random_pose(rng, 3.0), pb = random_pose(rng, 3.0);
        double expect = (pa.translation - pb.translation).norm() - 1.3;
        SeparationResult s = separation(a, pa, b, pb);
        CHECK(s.gap == doctest::Approx(expect).epsilon(1e-10));
        CHECK(s.overlapping() == (expect < 0));
        if (std::abs(expect) > 1e-6) {
            Vec3 expect_dir = (pa.translation - pb.translation).normalized();
            CHECK((s.witness_direction - expect_dir).norm() < 1e-8);
        }
    }
}

TEST_CASE("ball-cube axial oracle") {
    ConvexSolid ball = ConvexSolid::ball(0.5);
    ConvexSolid cube = make_platonic(PlatonicKind::Cube, 2.0);  // spans [-1,1]^3
    // ball center on the +x axis: gap = dist_to_face - radius
    for (double cx : {4.0, 2.0, 1.6, 1.5000001, 1.25}) {
        SeparationResult s = separation(ball, Pose::at({cx, 0, 0}), cube, Pose::at({0, 0, 0}));
        CHECK(s.gap == doctest::Approx(cx - 1.0 - 0.5).epsilon(1e-7));
    }
    // corner approach: nearest feature is the vertex (1,1,1)
    Vec3 c{3, 3, 3};
    SeparationResult s = separation(ball, Pose::at(c), cube, Pose::at({0, 0, 0}));
    CHECK(s.gap == doctest::Approx((c - Vec3{1, 1, 1}).norm() - 0.5).epsilon(1e-7));
}

TEST_CASE("separation is symmetric with flipped witness") {
    CounterRng rng(103);
    ConvexSolid a = make_platonic(PlatonicKind::Icosahedron, 1.0);
    ConvexSolid b = make_platonic(PlatonicKind::Tetrahedron, 1.4);
    for (int it = 0; it < 50; ++it) {
        Pose pa = random_pose(rng, 2.5), pb = random_pose(rng, 2.5);
        SeparationResult ab = separation(a, pa, b, pb);
        SeparationResult ba = separation(b, pb, a, pa);
        CHECK(ab.gap == doctest::Approx(ba.gap).epsilon(1e-6).scale(1.0));
        if (ab.gap > 1e-6)
            CHECK((ab.witness_direction + ba.witness_direction).norm() < 1e-4);
    }
}

TEST_CASE("separation is invariant under a common rigid motion") {
    CounterRng rng(107);
    ConvexSolid a = make_platonic(PlatonicKind::Dodecahedron, 0.8);
    ConvexSolid b = ConvexSolid::ball(0.6);
    for (int it = 0; it < 50; ++it) {
        Pose pa = random_pose(rng, 2.0), pb = random_pose(rng, 2.0);
        double g0 = separation(a, pa, b, pb).gap;
        Quat q = rng.uniform_rotation();
        Vec3 t = rng.uniform_direction() * rng.uniform(0.0, 4.0);
        Pose pa2{q.rotate(pa.translation) + t, q * pa.rotation};
        Pose pb2{q.rotate(pb.translation) + t, q * pb.rotation};
        double g1 = separation(a, pa2, b, pb2).gap;
        CHECK(g1 == doctest::Approx(g0).epsilon(1e-8).scale(1.0));
    }
}

TEST_CASE("disjoint gap is bracketed by sampling bounds") {
    CounterRng rng(109);
    ConvexSolid a = make_platonic(PlatonicKind::Octahedron, 1.0);
    ConvexSolid b = make_platonic(PlatonicKind::Cube, 0.9);
    int tested = 0;
    while (tested < 40) {
        Pose pa = random_pose(rng, 3.0), pb = random_pose(rng, 3.0);
        SeparationResult s = separation(a, pa, b, pb);
        if (s.gap <= 1e-4) continue;
        ++tested;
        double lower = direction_bound(a, pa, b, pb, rng, 500);
        double upper = sampled_distance(a, pa, b, pb, rng, 500);
        CHECK(s.gap >= lower - 1e-9);
        CHECK(s.gap <= upper + 1e-9);
    }
}

TEST_CASE("witness direction certifies the gap") {
    CounterRng rng(113);
    ConvexSolid a = make_platonic(PlatonicKind::Cube, 1.0);
    ConvexSolid b = make_platonic(PlatonicKind::Icosahedron, 1.0);
    int tested = 0;
    while (tested < 40) {
        Pose pa = random_pose(rng, 3.0), pb = random_pose(rng, 3.0);
        SeparationResult s = separation(a, pa, b, pb);
        if (s.gap <= 1e-4) continue;
        ++tested;
        // along the witness, the supporting planes are exactly gap apart
        Vec3 u = s.witness_direction.normalized();
        double plane_gap = -(a.support_value(pa, u * -1.0) + b.support_value(pb, u));
        CHECK(plane_gap == doctest::Approx(s.gap).epsilon(1e-5));
    }
}

TEST_CASE("deep overlap reports negative gap") {
    ConvexSolid a = make_platonic(PlatonicKind::Cube, 1.0);
    SeparationResult s = separation(a, Pose::at({0, 0, 0}), a, Pose::at({0.05, 0, 0}));
    CHECK(s.gap < 0);
    ConvexSolid b = ConvexSolid::ball(0.5);
    SeparationResult t = separation(b, Pose::at({0, 0, 0}), b, Pose::at({0.3, 0, 0}));
    CHECK(t.gap == doctest::Approx(-0.7).epsilon(1e-10));
}

TEST_CASE("touching bodies report a near-zero gap") {
    ConvexSolid ball = ConvexSolid::ball(0.5);
    SeparationResult s = separation(ball, Pose::at({0, 0, 0}), ball, Pose::at({1.0, 0, 0}));
    CHECK(std::abs(s.gap) < 1e-12);

    ConvexSolid cube = make_platonic(PlatonicKind::Cube, 1.0);
    SeparationResult t =
        separation(cube, Pose::at({0, 0, 0}), cube, Pose::at({1.0, 0.2, 0.1}));
    CHECK(std::abs(t.gap) < 1e-7);
}

TEST_CASE("distance_or_zero matches separation for disjoint bodies") {
    CounterRng rng(127);
    ConvexSolid a = make_platonic(PlatonicKind::Tetrahedron, 1.0);
    ConvexSolid b = ConvexSolid::ball(0.4);
    for (int it = 0; it < 100; ++it) {
        Pose pa = random_pose(rng, 3.0), pb = random_pose(rng, 3.0);
        SeparationResult s = separation(a, pa, b, pb);
        double d = distance_or_zero(a, pa, b, pb);
        if (s.gap > 1e-9)
            CHECK(d == doctest::Approx(s.gap).epsilon(1e-8));
        else
            CHECK(d == 0.0);
    }
}

TEST_CASE("overlaps honors the clearance margin") {
    ConvexSolid ball = ConvexSolid::ball(0.5);
    Pose a = Pose::at({0, 0, 0});
    Pose b = Pose::at({1.05, 0, 0});  // gap 0.05
    CHECK_FALSE(overlaps(ball, a, ball, b));
    CHECK_FALSE(overlaps(ball, a, ball, b, 0.04));
    CHECK(overlaps(ball, a, ball, b, 0.06));
}
