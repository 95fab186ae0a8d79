#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace packlab {

enum class ProtocolFamily { DensePourTap, DenseIdeal, LooseRotate };

const char* family_name(ProtocolFamily f);
ProtocolFamily family_from_name(const std::string& name);

// All lengths are absolute. Negative values mean "default relative to the
// particle diameter d", resolved by resolved_for(d):
//   lift_amplitude  -> 0.1 d
//   lateral_jitter  -> 0.4 d
struct ProtocolSpec {
    ProtocolFamily family = ProtocolFamily::DensePourTap;
    double pour_height = 2.0;       // alpha: drop height above the current fill
    double pour_rate = 100.0;       // beta: pieces per second (recorded, quasi-static engine)
    int agitation_cycles = 1000;    // theta, discretized (1 hour == 1000 cycles)
    double lift_amplitude = -1.0;   // A
    double lateral_jitter = -1.0;
    double gravity = 1.0;           // specific gravity, g/cm^3
    int loosen_cycles = 32;         // tilt schedule steps for the loose protocol
    double max_tilt_deg = 60.0;     // initial tilt of the effective gravity
    double plateau_tolerance = 0.001;
    int plateau_window = 100;
    std::size_t target_count = 0;   // 0: fill until the bed reaches height r

    // Effective lift: A * sqrt(g_ref / g), g_ref = 1. Gravity enters the
    // engine only through this coupling.
    double effective_lift(double d) const;
    double resolved_jitter(double d) const;

    std::string to_text() const;                       // key=value, one per line
    static ProtocolSpec from_text(const std::string&); // inverse
    static ProtocolSpec load(const std::string& path);
    void validate() const;  // throws std::invalid_argument

    static ProtocolSpec dense_pour_tap();
    static ProtocolSpec dense_ideal();
    static ProtocolSpec loose_rotate();
};

struct TrialResult {
    double apparent_density = 0.0;
    double bulk_density = 0.0;
    double bulk_stderr = 0.0;
    std::size_t particle_count = 0;
    std::size_t discarded = 0;
    double fill_height = 0.0;
    std::uint64_t seed = 0;
    int cycles_executed = 0;
    std::vector<double> density_history;  // apparent density per agitation cycle
};

} // namespace packlab
