#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "packlab/container.hpp"
#include "packlab/rng.hpp"

using namespace packlab;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("cylinder dimensions and membership") {
    Container c = Container::cylinder(6.0);
    CHECK(c.kind() == ContainerKind::Cylinder);
    CHECK(c.r() == doctest::Approx(6.0));
    CHECK(c.height() == doctest::Approx(12.0));
    CHECK(c.section_volume(12.0) == doctest::Approx(M_PI * 36.0 * 12.0).epsilon(1e-12));
    CHECK(c.interior_radius(0.0) == doctest::Approx(6.0));

    CHECK(c.inside_ball({0, 0, 0.5}, 0.5, 0.0));
    CHECK(c.inside_ball({5.5, 0, 6.0}, 0.5, 0.0));
    CHECK_FALSE(c.inside_ball({5.6, 0, 6.0}, 0.5, 0.0));
    CHECK_FALSE(c.inside_ball({0, 0, 0.4}, 0.5, 0.0));
    CHECK_FALSE(c.inside_ball({0, 0, 11.6}, 0.5, 0.0));
    // tolerance loosens the wall
    CHECK(c.inside_ball({5.6, 0, 6.0}, 0.5, 0.2));
}

TEST_CASE("cylinder ball_toi matches bisection on random rays") {
    Container c = Container::cylinder(4.0);
    CounterRng rng(211);
    const double R = 0.5;
    for (int it = 0; it < 200; ++it) {
        // random interior start
        Vec3 p;
        do {
            p = {rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5), rng.uniform(0.5, 7.5)};
        } while (!c.inside_ball(p, R, 0.0));
        Vec3 u = rng.uniform_direction();
        double tmax = rng.uniform(0.5, 6.0);
        double toi = c.ball_toi(p, R, u, tmax);
        // bisection oracle on the membership predicate
        double lo = 0.0, hi = tmax;
        bool exits = !c.inside_ball(p + u * tmax, R, 1e-12);
        if (!exits) {
            CHECK(toi >= tmax - 1e-9);
            continue;
        }
        for (int k = 0; k < 200; ++k) {
            double mid = 0.5 * (lo + hi);
            if (c.inside_ball(p + u * mid, R, 1e-12))
                lo = mid;
            else
                hi = mid;
        }
        CHECK(toi == doctest::Approx(lo).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("cylinder ball contacts report inward normals") {
    Container c = Container::cylinder(4.0);
    std::vector<Vec3> normals;
    c.ball_contacts({3.5, 0, 2.0}, 0.5, 1e-9, normals);  // at the wall
    REQUIRE(normals.size() == 1);
    CHECK((normals[0] - Vec3{-1, 0, 0}).norm() < 1e-12);

    normals.clear();
    c.ball_contacts({0, 0, 0.5}, 0.5, 1e-9, normals);  // on the floor
    REQUIRE(normals.size() == 1);
    CHECK((normals[0] - Vec3{0, 0, 1}).norm() < 1e-12);

    normals.clear();
    c.ball_contacts({0, 0, 2.0}, 0.5, 1e-9, normals);  // free
    CHECK(normals.empty());
}

TEST_CASE("perturbed cylinder brackets the plain cylinders") {
    double bump = 0.5;
    Container c = Container::perturbed_cylinder(5.0, bump, 16, 8, 0.8, 77);
    CHECK(c.kind() == ContainerKind::PerturbedCylinder);
    CounterRng rng(213);
    for (int it = 0; it < 300; ++it) {
        Vec3 p{rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(0, 10)};
        double w = c.wall_radius_at(p);
        CHECK(w >= 5.0 - 1e-12);
        CHECK(w <= 5.0 + bump + 1e-12);
        // containment sandwich: inside C_5 => inside perturbed => inside C_5.5
        if (Container::cylinder(5.0).inside_ball(p, 0.5, 0.0)) CHECK(c.inside_ball(p, 0.5, 0.0));
        if (c.inside_ball(p, 0.5, 0.0))
            CHECK(Container::cylinder(5.0 + bump).inside_ball(p, 0.5, 1e-12));
    }
}

TEST_CASE("cube container accepts solids via clearance") {
    Container c = Container::parse("cube:side=4");
    CHECK(c.kind() == ContainerKind::ScaledConvex);
    ConvexSolid ball = ConvexSolid::ball(0.5);
    CHECK(contains_solid(c, ball, Pose::at({0, 0, 0.5}), 1e-12));
    CHECK(contains_solid(c, ball, Pose::at({1.5, 1.5, 3.5}), 1e-12));
    CHECK_FALSE(contains_solid(c, ball, Pose::at({1.6, 0, 2.0}), 1e-12));
    CHECK(c.solid_clearance(ball, Pose::at({0, 0, 1.0})) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("container parse round trip and errors") {
    CHECK(Container::parse("cylinder:r=6").r() == doctest::Approx(6.0));
    Container c = Container::parse(Container::cylinder(3.5).spec_string());
    CHECK(c.r() == doctest::Approx(3.5));
    CHECK_THROWS_AS(Container::parse("sphere:r=1"), std::invalid_argument);
    CHECK_THROWS_AS(Container::parse("cylinder:r=-2"), std::invalid_argument);
}

TEST_CASE("scaled container multiplies all lengths") {
    Container c = Container::cylinder(4.0);
    Container s = c.scaled(2.5);
    CHECK(s.r() == doctest::Approx(10.0));
    CHECK(s.height() == doctest::Approx(20.0));
    CHECK(s.section_volume(s.height()) ==
          doctest::Approx(c.section_volume(c.height()) * 2.5 * 2.5 * 2.5).epsilon(1e-12));
}

TEST_CASE("fill height ignores stray fliers") {
    Container c = Container::cylinder(6.0);
    ConvexSolid ball = ConvexSolid::ball(0.5);
    PackingState st{c, ball, {}, 1, {}};
    // a flat layer of 100 balls at z=0.5, one flier far above
    CounterRng rng(219);
    for (int i = 0; i < 100; ++i) {
        Vec3 xy = rng.uniform_disk(5.0);
        st.poses.push_back(Pose::at({xy.x, xy.y, 0.5}));
    }
    double base = fill_height(st);
    CHECK(base == doctest::Approx(1.0).epsilon(1e-9));
    st.poses.push_back(Pose::at({0, 0, 9.0}));
    CHECK(fill_height(st) == doctest::Approx(1.0).epsilon(0.05));  // outlier discarded
}

TEST_CASE("lattice packings reproduce the classical densities") {
    Container c = Container::cylinder(10.0);
    ConvexSolid ball = ConvexSolid::ball(0.5);

    PackingState fcc = make_lattice_packing(LatticeKind::Fcc, 0.5, c, 0.0);
    BulkDensity bf = bulk_density_auto(fcc, {2'000'000, -1.0});
    CHECK(std::abs(bf.value - M_PI / std::sqrt(18.0)) < 0.002);

    PackingState sc = make_lattice_packing(LatticeKind::SimpleCubic, 0.5, c, 0.0);
    BulkDensity bs = bulk_density_auto(sc, {2'000'000, -1.0});
    CHECK(std::abs(bs.value - M_PI / 6.0) < 0.002);

    // no overlaps in either lattice
    for (const PackingState* st : {&fcc, &sc}) {
        double min_gap = 1e300;
        for (std::size_t i = 0; i < st->count(); ++i)
            for (std::size_t j = i + 1; j < st->count(); ++j)
                min_gap = std::min(
                    min_gap, (st->poses[i].translation - st->poses[j].translation).norm() - 1.0);
        CHECK(min_gap >= -1e-12);
    }
}

TEST_CASE("bulk density of a known slab") {
    // analytic check: one FCC-filled cylinder, measurement window strictly
    // interior, density close to the infinite-lattice value regardless of
    // margins
    Container c = Container::cylinder(8.0);
    PackingState fcc = make_lattice_packing(LatticeKind::Fcc, 0.5, c, 0.0);
    BulkDensity b1 = bulk_density(fcc, 2.0, 2.0, {500'000, -1.0});
    BulkDensity b2 = bulk_density(fcc, 3.0, 2.5, {500'000, -1.0});
    CHECK(std::abs(b1.value - M_PI / std::sqrt(18.0)) < 0.004);
    CHECK(std::abs(b2.value - M_PI / std::sqrt(18.0)) < 0.004);
    CHECK_THROWS_AS(bulk_density(fcc, 8.5, 0.1), std::invalid_argument);   // no radius left
    CHECK_THROWS_AS(bulk_density(fcc, 2.0, 50.0), std::invalid_argument);  // floor above fill
}

TEST_CASE("apparent density counts solid volume below the fill level") {
    Container c = Container::cylinder(5.0);
    ConvexSolid ball = ConvexSolid::ball(0.5);
    PackingState st{c, ball, {}, 1, {}};
    CHECK(apparent_density(st) == 0.0);
    // single layer of balls: fill height 1, density = N * vol / (pi r^2 * 1)
    int n = 0;
    for (double x = -4.5; x <= 4.5; x += 1.0)
        for (double y = -4.5; y <= 4.5; y += 1.0)
            if (std::sqrt(x * x + y * y) <= 4.5) {
                st.poses.push_back(Pose::at({x, y, 0.5}));
                ++n;
            }
    double expect = n * ball.volume() / (M_PI * 25.0 * 1.0);
    CHECK(apparent_density(st) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("snapshot round trip is bit exact") {
    Container c = Container::cylinder(6.0);
    ConvexSolid ball = ConvexSolid::ball(0.5);
    PackingState st{c, ball, {}, 987654321, {"pour"}};
    CounterRng rng(223);
    for (int i = 0; i < 64; ++i) {
        st.poses.push_back(
            {rng.uniform_direction() * rng.uniform(0.0, 5.0), rng.uniform_rotation()});
        st.poses.back().translation.z = std::abs(st.poses.back().translation.z) + 0.5;
    }
    std::string path = temp_path("packlab_test_snapshot.csv");
    write_snapshot(st, path);
    PackingState rt = read_snapshot(path);
    REQUIRE(rt.count() == st.count());
    CHECK(rt.seed == st.seed);
    CHECK(rt.container.spec_string() == c.spec_string());
    CHECK(rt.solid.spec_string() == ball.spec_string());
    for (std::size_t i = 0; i < st.count(); ++i) {
        CHECK(rt.poses[i].translation == st.poses[i].translation);  // bit exact
        CHECK(rt.poses[i].rotation == st.poses[i].rotation);
    }
    std::remove(path.c_str());
}

TEST_CASE("malformed snapshots are rejected") {
    std::string path = temp_path("packlab_test_bad_snapshot.csv");
    {
        FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("not a snapshot\n1,2,3\n", f);
        std::fclose(f);
    }
    CHECK_THROWS(read_snapshot(path));
    std::remove(path.c_str());
    CHECK_THROWS(read_snapshot(temp_path("packlab_test_missing_snapshot.csv")));
}
