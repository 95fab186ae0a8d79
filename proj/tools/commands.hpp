#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace packlab::cli {

// Exit codes (documented in FORMATS.md): 0 success, 1 check-mode range miss,
// 2 configuration error, 3 simulation failure.
inline constexpr int EXIT_OK = 0;
inline constexpr int EXIT_CHECK_FAILED = 1;
inline constexpr int EXIT_CONFIG = 2;
inline constexpr int EXIT_SIMULATION = 3;

struct CommonOpts {
    std::string out_dir;  // default: $PACKLAB_OUT or "."
    std::string format = "json";
    bool check = false;
    bool gnuplot = false;
};

struct PackOpts {
    std::string solid = "ball:r=0.5";
    std::string container = "cylinder:r=6";
    std::string protocol_path;  // empty: family default
    std::string family = "dense_pour_tap";
    std::uint64_t seed = 42;
    std::size_t particles = 0;  // 0: protocol default (fill to half height)
    int cycles = -1;            // override agitation_cycles when >= 0
};

struct AnalyzeOpts {
    std::string snapshot;
    double margin_d = 2.0;  // interior margin in diameters
    double cutoff_d = 4.0;  // Voronoi neighbor cutoff in diameters
    double tau = 0.01;
};

struct DistanceOpts {
    std::string solid_a;
    std::string solid_b;
    int budget = 48;
    bool exact_ball = true;
    bool no_reflect = false;
    std::uint64_t seed = 2026;
};

struct SweepOpts {
    std::string plan_path;
    std::string kind = "density";  // density | gravity | shape
    std::vector<std::string> solids;
    std::string r_grid;  // "a,b,c" override
    int trials = 0;      // override when > 0
    std::uint64_t seed = 0;  // override when nonzero
};

struct BatteryOpts {
    std::string plan_path;
    std::string which = "boundary";  // boundary | container
    std::string alt_container = "cube";
    double bump_fraction = 1.0;  // of the particle diameter
    std::string r_grid;
    int trials = 0;
    std::uint64_t seed = 0;
};

struct ReproduceOpts {
    std::string table;  // T1..T5, fig1
    std::uint64_t seed = 42;
    std::size_t particles = 600;
    double r_in_d = 8.0;
    int cycles = 400;
    int trials = 1;
};

int cmd_pack(const CommonOpts& common, const PackOpts& opts);
int cmd_analyze(const CommonOpts& common, const AnalyzeOpts& opts);
int cmd_distance(const CommonOpts& common, const DistanceOpts& opts);
int cmd_sweep(const CommonOpts& common, const SweepOpts& opts);
int cmd_battery(const CommonOpts& common, const BatteryOpts& opts);
int cmd_reproduce(const CommonOpts& common, const ReproduceOpts& opts);

} // namespace packlab::cli
