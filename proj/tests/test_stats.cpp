#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "packlab/settle.hpp"
#include "packlab/stats.hpp"

using namespace packlab;

namespace {

PackingState pour_balls(std::size_t n, double container_r, std::uint64_t seed) {
    ProtocolSpec spec = ProtocolSpec::dense_pour_tap();
    spec.agitation_cycles = 0;
    spec.target_count = n;
    return pour(Container::cylinder(container_r), ConvexSolid::ball(0.5), spec, seed);
}

// reference implementation of radial_count: plain O(n^2) double loop
double radial_count_brute(const Cluster& c, double x) {
    const double rr2 = (1.0 + x) * c.d * ((1.0 + x) * c.d);
    std::uint64_t total = 0;
    for (const Vec3& b : c.base)
        for (const Vec3& q : c.all) {
            double d2 = (q - b).norm2();
            if (d2 > 0.0 && d2 <= rr2) ++total;
        }
    return double(total) / double(c.base.size());
}

// cell volume from its face polygons (divergence theorem about the centroid)
double cell_volume(const VoronoiCell& cell) {
    Vec3 centroid{0, 0, 0};
    std::size_t n = 0;
    for (const auto& f : cell.faces)
        for (const Vec3& p : f) {
            centroid += p;
            ++n;
        }
    centroid = centroid * (1.0 / double(n));
    double vol = 0.0;
    for (const auto& f : cell.faces) {
        double part = 0.0;
        for (std::size_t i = 1; i + 1 < f.size(); ++i)
            part += (f[i] - f[0]).cross(f[i + 1] - f[0]).dot(f[0] - centroid);
        vol += std::abs(part) / 6.0;
    }
    return vol;
}

} // namespace

TEST_CASE("interior cluster keeps only centers away from the boundary") {
    PackingState st = pour_balls(200, 6.0, 3);
    double margin = 2.0;
    Cluster c = interior_cluster(st, margin);
    CHECK(c.all.size() == st.count());
    CHECK(c.d == doctest::Approx(1.0));
    double top = fill_height(st) - margin;
    for (const Vec3& b : c.base) {
        CHECK(b.z <= top + 1e-12);
        CHECK(b.radial() <= 6.0 - margin + 1e-12);
        CHECK(b.z >= margin - 1e-12);
    }
    // every center not in base violates one of the margins
    std::size_t violations = 0;
    for (const Vec3& p : c.all) {
        bool interior = p.z <= top && p.z >= margin && p.radial() <= 6.0 - margin;
        if (!interior) ++violations;
    }
    CHECK(c.base.size() + violations >= c.all.size());  // base may drop ties only
}

TEST_CASE("fcc lattice has touching number 12 and sc has 6") {
    Container c = Container::cylinder(8.0);
    PackingState fcc = make_lattice_packing(LatticeKind::Fcc, 0.5, c, 0.0);
    Cluster cf = interior_cluster(fcc, 2.0);
    REQUIRE(!cf.empty());
    // nearest shell sits exactly at distance d; the next at sqrt(2) d
    CHECK(radial_count(cf, 1e-9) == doctest::Approx(12.0));
    CHECK(radial_count(cf, 0.2) == doctest::Approx(12.0));
    CHECK(contact_number(cf) == doctest::Approx(12.0));

    PackingState sc = make_lattice_packing(LatticeKind::SimpleCubic, 0.5, c, 0.0);
    Cluster cs = interior_cluster(sc, 2.0);
    REQUIRE(!cs.empty());
    CHECK(radial_count(cs, 1e-9) == doctest::Approx(6.0));
    CHECK(radial_count(cs, 0.2) == doctest::Approx(6.0));
}

TEST_CASE("radial count is non-decreasing in x") {
    PackingState st = pour_balls(250, 6.0, 17);
    Cluster c = interior_cluster(st, 1.5);
    REQUIRE(!c.empty());
    double prev = -1.0;
    for (double x : {0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}) {
        double f = radial_count(c, x);
        CHECK(f >= prev);
        prev = f;
    }
    // radial_profile reports the same numbers
    auto prof = radial_profile(c, {0.0, 0.05, 0.5});
    CHECK(prof.size() == 3);
    CHECK(prof[1].first == doctest::Approx(0.05));
    CHECK(prof[1].second == radial_count(c, 0.05));
}

TEST_CASE("grid radial count equals the quadratic reference exactly") {
    for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
        PackingState st = pour_balls(300, 7.0, seed);
        Cluster c = interior_cluster(st, 1.5);
        REQUIRE(!c.empty());
        for (double x : {0.0, 0.01, 0.1, 0.37, 1.0}) {
            // counts are integers, so the means must agree bitwise
            CHECK(radial_count(c, x) == radial_count_brute(c, x));
        }
    }
}

TEST_CASE("radial count input validation") {
    PackingState st = pour_balls(50, 5.0, 9);
    Cluster c = interior_cluster(st, 1.0);
    CHECK_THROWS_AS(radial_count(c, -0.1), std::invalid_argument);
    Cluster empty;
    empty.d = 1.0;
    CHECK_THROWS_AS(radial_count(empty, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(voronoi_cells(empty, 4.0), std::invalid_argument);
    CHECK_THROWS_AS(voronoi_cells(c, 0.0), std::invalid_argument);
}

TEST_CASE("simple cubic voronoi cells are cubes") {
    Container c = Container::cylinder(8.0);
    PackingState sc = make_lattice_packing(LatticeKind::SimpleCubic, 0.5, c, 0.0);
    Cluster cl = interior_cluster(sc, 2.5);
    REQUIRE(!cl.empty());
    VoronoiResult vr = voronoi_cells(cl, 4.0);
    REQUIRE(!vr.cells.empty());
    for (const VoronoiCell& cell : vr.cells) {
        CHECK(cell.face_count == 6);
        CHECK(cell.vertex_count == 8);
        CHECK(cell.edge_count == 12);
        CHECK(cell.vertex_count - cell.edge_count + cell.face_count == 2);  // Euler
        // lattice constant is d, so each cell is a unit cube
        CHECK(cell_volume(cell) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("fcc voronoi cells are rhombic dodecahedra") {
    Container c = Container::cylinder(8.0);
    PackingState fcc = make_lattice_packing(LatticeKind::Fcc, 0.5, c, 0.0);
    Cluster cl = interior_cluster(fcc, 2.5);
    REQUIRE(!cl.empty());
    VoronoiResult vr = voronoi_cells(cl, 4.0);
    REQUIRE(!vr.cells.empty());
    // cell volume = lattice volume per site = d^3 / sqrt(2)
    const double want_vol = 1.0 / std::sqrt(2.0);
    for (const VoronoiCell& cell : vr.cells) {
        CHECK(cell.face_count == 12);
        CHECK(cell.vertex_count == 14);
        CHECK(cell.edge_count == 24);
        CHECK(cell.vertex_count - cell.edge_count + cell.face_count == 2);
        CHECK(cell_volume(cell) == doctest::Approx(want_vol).epsilon(1e-9));
    }
}

TEST_CASE("random packing voronoi cells satisfy euler's relation") {
    PackingState st = pour_balls(400, 7.0, 23);
    Cluster cl = interior_cluster(st, 2.0);
    REQUIRE(!cl.empty());
    VoronoiResult vr = voronoi_cells(cl, 4.0);
    REQUIRE(vr.cells.size() >= 10);
    for (const VoronoiCell& cell : vr.cells) {
        CHECK(cell.vertex_count - cell.edge_count + cell.face_count == 2);
        CHECK(cell.face_count >= 4);
    }
}

TEST_CASE("voronoi cells contain their own center and exclude others") {
    PackingState st = pour_balls(300, 6.0, 29);
    Cluster cl = interior_cluster(st, 2.0);
    REQUIRE(!cl.empty());
    VoronoiResult vr = voronoi_cells(cl, 4.0);
    REQUIRE(!vr.cells.empty());
    CounterRng rng(4);
    for (const VoronoiCell& cell : vr.cells) {
        const Vec3& own = cl.base[std::size_t(cell.owner)];
        CHECK(cell_contains(cell, cl, own));
        // interior points of the cell are closer to the owner than to anyone
        for (int trial = 0; trial < 8; ++trial) {
            Vec3 p = own + rng.uniform_direction() * (0.3 * rng.uniform());
            bool inside = cell_contains(cell, cl, p);
            double down = (p - own).norm2();
            bool nearest = true;
            for (const Vec3& q : cl.all) {
                if ((q - own).norm2() == 0.0) continue;
                if ((p - q).norm2() < down - 1e-9) nearest = false;
            }
            CHECK(inside == nearest);
        }
    }
}

TEST_CASE("face number distribution summarizes the cells") {
    PackingState st = pour_balls(400, 7.0, 31);
    Cluster cl = interior_cluster(st, 2.0);
    VoronoiResult vr = voronoi_cells(cl, 4.0);
    REQUIRE(vr.cells.size() >= 10);
    FaceHistogram h = face_number_distribution(vr.cells);
    CHECK(h.cell_count == vr.cells.size());
    double total = 0.0, mean = 0.0;
    int best_count = -1;
    for (auto [faces, frac] : h.fraction) {
        total += frac;
        mean += faces * frac;
        int n = int(std::lround(frac * double(h.cell_count)));
        if (n > best_count) best_count = n;
    }
    CHECK(total == doctest::Approx(1.0));
    CHECK(mean == doctest::Approx(h.mean));
    // the mode is the bin with the highest fraction
    double mode_frac = h.fraction.at(h.mode);
    for (auto [faces, frac] : h.fraction) CHECK(frac <= mode_frac + 1e-12);

    FaceHistogram none = face_number_distribution({});
    CHECK(none.cell_count == 0);
    CHECK(none.fraction.empty());
}
