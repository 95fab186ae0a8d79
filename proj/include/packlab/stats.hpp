#pragma once

#include <map>

#include "packlab/container.hpp"

namespace packlab {

// Interior particle centers (base points for neighbor statistics) plus the
// full center list used as neighbor candidates.
struct Cluster {
    std::vector<Vec3> base;      // interior centers x_1..x_m
    std::vector<Vec3> all;       // every center in the packing
    double d = 0.0;              // particle diameter
    double margin = 0.0;
    bool empty() const { return base.empty(); }
};

Cluster interior_cluster(const PackingState& state, double margin);

// f(x): mean number of neighbors with center distance <= (1+x) d, base points
// from the cluster, candidates from the whole packing. Non-decreasing in x.
double radial_count(const Cluster& cluster, double x);

std::vector<std::pair<double, double>> radial_profile(const Cluster& cluster,
                                                      const std::vector<double>& x_grid);

// mean touching number at relative tolerance tau; identical to radial_count
// at x = tau by definition.
double contact_number(const Cluster& cluster, double tau = 0.01);

struct VoronoiCell {
    int owner = -1;                          // index into cluster.base
    std::vector<std::vector<Vec3>> faces;    // planar polygons
    int face_count = 0;
    int vertex_count = 0;
    int edge_count = 0;
};

struct VoronoiResult {
    std::vector<VoronoiCell> cells;
    int excluded_unbounded = 0;  // insufficient neighbors within the cutoff
};

// Per interior center: intersection of bisector half-spaces against every
// neighbor within cutoff. Faces below 1e-10 d^2 are dropped.
VoronoiResult voronoi_cells(const Cluster& cluster, double cutoff);

bool cell_contains(const VoronoiCell& cell, const Cluster& cluster, const Vec3& p);

struct FaceHistogram {
    std::map<int, double> fraction;  // face count -> fraction of cells
    double mean = 0.0;
    int mode = 0;
    std::size_t cell_count = 0;
};

FaceHistogram face_number_distribution(const std::vector<VoronoiCell>& cells);

} // namespace packlab
