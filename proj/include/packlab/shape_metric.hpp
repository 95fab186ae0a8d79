#pragma once

#include <cstdint>
#include <utility>

#include "packlab/solid.hpp"

namespace packlab {

struct ShapeMetricOptions {
    int rotation_starts = 48;   // coarse multi-start over orientations
    int refine_top = 6;         // how many of the best starts get local refinement
    double tol = 1e-9;          // relative termination tolerance
    std::uint64_t seed = 2026;  // deterministic start-point generator
    bool allow_reflection = true;
    bool force_general = false; // skip the exact ball path (testing hook)
};

// Distance ||K1, K2|| = log gamma for the minimal gamma admitting a similarity
// sigma with K1 <= sigma(K2) <= gamma K1 + x. The similarity group includes
// reflections.
struct ShapeDistanceResult {
    double gamma = 1.0;
    double log_gamma = 0.0;
    Similarity witness_sigma;
    Vec3 witness_x{0, 0, 0};
    double inner_margin = 0.0;  // min slack of K1 <= sigma(K2)
    double outer_margin = 0.0;  // min slack of sigma(K2) <= gamma K1 + x
    bool exact = false;         // ball-vs-polytope / ball-vs-ball closed path
};

ShapeDistanceResult shape_distance(const ConvexSolid& k1, const ConvexSolid& k2,
                                   const ShapeMetricOptions& opts = {});

// Certificate check for K1 <= sigma(K2) <= gamma K1 + x. Returns
// (inner_margin, outer_margin): minimum boundary slacks, negative when the
// respective containment is violated.
std::pair<double, double> verify_containment(const ConvexSolid& k1, const Similarity& sigma,
                                             const ConvexSolid& k2, double gamma, const Vec3& x);

} // namespace packlab
