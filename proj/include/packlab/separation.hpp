#pragma once

#include "packlab/solid.hpp"

namespace packlab {

// gap > 0: interiors disjoint, gap = closest-point distance.
// gap < 0: penetrating, |gap| is an upper-bound estimate of the depth.
// witness_direction points from B toward A; moving A along it opens the gap.
struct SeparationResult {
    double gap = 0.0;
    Vec3 witness_direction{0, 0, 1};
    bool overlapping() const { return gap < 0.0; }
};

struct SeparationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SeparationResult separation(const ConvexSolid& a, const Pose& pose_a,
                            const ConvexSolid& b, const Pose& pose_b);

// Distance-only query: returns closest distance if the bodies are disjoint,
// 0.0 if they touch or overlap. Cheaper than full separation for settling.
double distance_or_zero(const ConvexSolid& a, const Pose& pose_a,
                        const ConvexSolid& b, const Pose& pose_b,
                        Vec3* direction_out = nullptr);

bool overlaps(const ConvexSolid& a, const Pose& pose_a,
              const ConvexSolid& b, const Pose& pose_b, double clearance = 0.0);

} // namespace packlab
