#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "packlab/rng.hpp"
#include "packlab/solid.hpp"

namespace packlab {

enum class ContainerKind { Cylinder, PerturbedCylinder, ScaledConvex };

// Containers stand on the floor z = 0, centered on the z-axis.
//  - Cylinder: radius r, height 2r.
//  - PerturbedCylinder: cylinder with outward radial bumps in [0, bump_limit]
//    on an angular/vertical grid, so C_r <= C~ <= C_{r+bump_limit}.
//  - ScaledConvex: a scaled convex polytope (e.g. a cube), lowest point at z=0.
class Container {
public:
    static Container cylinder(double r);
    static Container perturbed_cylinder(double r, double bump_limit, int n_theta, int n_z,
                                        double amplitude, std::uint64_t bump_seed);
    static Container scaled_convex(const ConvexSolid& base, double scale);
    static Container parse(const std::string& spec);

    ContainerKind kind() const { return kind_; }
    double r() const { return r_; }
    double height() const { return height_; }
    std::string spec_string() const { return spec_; }

    // --- ball-specific queries (hot path in the settling engine) ---

    // Effective wall radius for a ball center near angle theta / height z.
    // Conservative: minimum bump over the containing grid cell and neighbours.
    double wall_radius_at(const Vec3& center) const;

    bool inside_ball(const Vec3& center, double ball_r, double tol) const;

    // First t in (0, tmax] at which a ball center moving along dir hits a
    // boundary constraint; infinity if none.
    double ball_toi(const Vec3& center, double ball_r, const Vec3& dir, double tmax) const;

    // Inward normals of constraints active within tol at the given center.
    void ball_contacts(const Vec3& center, double ball_r, double tol,
                       std::vector<Vec3>& normals) const;

    // --- general solid queries ---

    // Minimum slack of the posed solid against all boundary constraints
    // (negative = protruding).
    double solid_clearance(const ConvexSolid& solid, const Pose& pose) const;

    void solid_contacts(const ConvexSolid& solid, const Pose& pose, double tol,
                        std::vector<Vec3>& normals) const;

    // Largest travel t in [0, tmax] along dir (no rotation) that keeps
    // solid_clearance >= margin; 0 when already at or past the margin and
    // still approaching.
    double solid_toi(const ConvexSolid& solid, const Pose& pose, const Vec3& dir, double margin,
                     double tmax) const;

    // Largest radius of a vertical cylinder about the z-axis that fits inside
    // the container cross-section, minus margin.
    double interior_radius(double margin) const;

    // Container volume below height h (for apparent density).
    double section_volume(double h) const;

    Container scaled(double lambda) const;  // all lengths multiplied by lambda

private:
    Container() = default;

    ContainerKind kind_ = ContainerKind::Cylinder;
    double r_ = 0.0;
    double height_ = 0.0;
    std::string spec_;

    // perturbed cylinder
    int n_theta_ = 0, n_z_ = 0;
    double bump_limit_ = 0.0, amplitude_ = 0.0;
    std::uint64_t bump_seed_ = 0;
    std::vector<double> bumps_;  // [iz * n_theta + it]

    // scaled convex
    std::vector<Plane> facets_;  // world frame
    std::optional<ConvexSolid> base_;
    double scale_ = 1.0;
};

// true iff the posed solid lies in the container within -tol boundary slack.
bool contains_solid(const Container& c, const ConvexSolid& solid, const Pose& pose,
                    double tol);

struct PackingState {
    Container container;
    ConvexSolid solid;
    std::vector<Pose> poses;
    std::uint64_t seed = 0;
    std::vector<std::string> protocol_trace;

    std::size_t count() const { return poses.size(); }
};

// Fill level: mean of top-point heights strictly above (max - d), after
// discarding the highest 2% of solids as outliers.
double fill_height(const PackingState& state);

// N * vol(K) / container section volume up to the fill level. Empty -> 0.
double apparent_density(const PackingState& state);

struct BulkDensity {
    double value = 0.0;
    double stderr_est = 0.0;
    std::size_t samples = 0;
    std::size_t hits = 0;
};

struct BulkOptions {
    std::size_t points = 1'000'000;
    double top_cut = -1.0;  // < 0: same as floor_margin
};

// Volume fraction inside the interior measurement window, by Halton sampling.
// Throws std::invalid_argument on a degenerate window.
BulkDensity bulk_density(const PackingState& state, double wall_margin, double floor_margin,
                         const BulkOptions& opts = {});

// Margins adapted to shallow beds: floor margin and top cut shrink to fit a
// usable window (never below ~0.8 d). Used by protocol drivers and the CLI.
BulkDensity bulk_density_auto(const PackingState& state, const BulkOptions& opts = {});

// Snapshot CSV: header comments (solid, container, seed), then
// index,x,y,z,qw,qx,qy,qz at 17 significant digits. Bit-exact round trip.
void write_snapshot(const PackingState& state, const std::string& path);
PackingState read_snapshot(const std::string& path);

// Lattice constructions used by tests and the analysis oracles: sphere
// packings clipped to the container.
enum class LatticeKind { SimpleCubic, Fcc };
PackingState make_lattice_packing(LatticeKind kind, double ball_radius,
                                  const Container& container, double boundary_clearance);

} // namespace packlab
