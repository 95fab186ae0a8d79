#pragma once

#include <cstdint>
#include <cmath>

#include "packlab/vec3.hpp"

namespace packlab {

// Counter-based generator. Each draw is
//
//   out = mix64(key ^ (counter * 0x9E3779B97F4A7C15))
//
// where mix64 is the SplitMix64 finalizer and the counter increments by one
// per draw. The key is derived from a 64-bit seed by one round of mix64.
// Sub-streams are derived by stream(id): key' = mix64(key ^ mix64(id)), with
// a fresh counter. Identical (seed, stream path, draw index) gives identical
// output on every platform; jumping to an arbitrary draw index is O(1).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : key_(mix64(seed)) {}

    CounterRng stream(std::uint64_t id) const {
        return CounterRng(FromKey{}, mix64(key_ ^ mix64(id)));
    }

    std::uint64_t next_u64() { return mix64(key_ ^ (counter_++ * GAMMA)); }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    // uniform point in the disk of given radius, z = 0
    Vec3 uniform_disk(double radius) {
        double u = uniform(), v = uniform();
        double rho = radius * std::sqrt(u);
        double phi = 2.0 * M_PI * v;
        return {rho * std::cos(phi), rho * std::sin(phi), 0.0};
    }

    // uniform unit vector
    Vec3 uniform_direction() {
        double z = uniform(-1.0, 1.0);
        double phi = 2.0 * M_PI * uniform();
        double s = std::sqrt(std::fmax(0.0, 1.0 - z * z));
        return {s * std::cos(phi), s * std::sin(phi), z};
    }

    // uniform random rotation (Shoemake's method)
    Quat uniform_rotation() {
        double u1 = uniform(), u2 = uniform(), u3 = uniform();
        double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
        return Quat{a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2),
                    b * std::sin(2 * M_PI * u3), b * std::cos(2 * M_PI * u3)}
            .normalized();
    }

    static std::uint64_t mix64(std::uint64_t v) {
        v += 0x9E3779B97F4A7C15ull;
        v = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9ull;
        v = (v ^ (v >> 27)) * 0x94D049BB133111EBull;
        return v ^ (v >> 31);
    }

private:
    struct FromKey {};
    CounterRng(FromKey, std::uint64_t key) : key_(key) {}

    static constexpr std::uint64_t GAMMA = 0x9E3779B97F4A7C15ull;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace packlab
