#pragma once

#include "packlab/container.hpp"
#include "packlab/protocol.hpp"
#include "packlab/rng.hpp"

namespace packlab {

struct SettleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sequential deposition: each particle enters at a uniformly random horizontal
// position at (current fill + pour_height), with a uniformly random
// orientation for polytopes, and descends by steepest-descent height
// minimization subject to non-overlap until locally stable.
PackingState pour(const Container& container, const ConvexSolid& solid,
                  const ProtocolSpec& spec, std::uint64_t rng_seed);

// One tap: lift every particle by the effective amplitude with independent
// lateral jitter (overlap/exit moves rejected), then resettle everything
// bottom-up until no particle moves more than 1e-6 d. A cycle that would end
// with higher total potential energy than before the lift is reverted.
void agitate_cycle(PackingState& state, const ProtocolSpec& spec, CounterRng& rng);

// Decompaction: particles re-deposited in randomized order under an effective
// gravity that starts tilted (max_tilt_deg) and returns to vertical over
// loosen_cycles batches, with settling stopped at the first stable contact set.
void loosen(PackingState& state, const ProtocolSpec& spec, CounterRng& rng);

// Reference densifier for spheres: random points grown to full radius with
// symmetric push-apart of overlapping pairs, targeting a dense bed.
PackingState densify_ideal(std::size_t count, const ConvexSolid& ball,
                           const Container& container, std::uint64_t rng_seed);

// Full protocol: dense_pour_tap = pour + agitation with plateau early stop;
// dense_ideal = densify_ideal; loose_rotate = pour + loosen.
TrialResult run_protocol(const ConvexSolid& solid, const Container& container,
                         const ProtocolSpec& spec, std::uint64_t seed,
                         PackingState* state_out = nullptr);

// Validity audit: pairwise penetration and containment within 1e-9 d.
// Throws SettleError with a description on the first violation.
void audit_state(const PackingState& state);
double max_penetration(const PackingState& state);  // >= 0; 0 when fully valid

} // namespace packlab
