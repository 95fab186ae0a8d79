#pragma once

#include "packlab/settle.hpp"
#include "packlab/shape_metric.hpp"

namespace packlab {

// One experiment schema: a solid, a container family over an r grid, a
// protocol, a gravity grid, and n seeded trials per (r, g) cell.
struct ExperimentPlan {
    std::string solid_spec = "ball:r=0.5";
    std::string container_family = "cylinder";  // cylinder | cube
    std::vector<double> r_grid;                 // absolute lengths, strictly increasing
    std::vector<double> gravity_grid{1.0};
    ProtocolSpec protocol;
    int trials = 10;
    std::uint64_t base_seed = 1;

    void validate() const;  // throws std::invalid_argument
    std::string to_text() const;
    static ExperimentPlan from_text(const std::string& text);
    static ExperimentPlan load(const std::string& path);
};

// Seed splitter, documented contract: the trial with index i of cell c uses
//   seed = mix64(base_seed ^ mix64(cell_id)) + i
// with cell_id = g_index * |r_grid| + r_index.
std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t cell_id, int trial_index);

Container make_plan_container(const std::string& family, double r);

struct TrialRecord {
    double r = 0.0;
    double gravity = 1.0;
    int trial_index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    TrialResult result;
};

std::vector<TrialRecord> run_trials(const ExperimentPlan& plan, std::size_t r_index,
                                    std::size_t g_index);

struct Expectation {
    double mean = 0.0;
    double stderr_est = 0.0;
    int n_used = 0;
    bool stable = true;  // last-half mean within 2 stderr of first-half mean
};

Expectation expectation(const std::vector<double>& densities);

struct DensityEstimate {
    double delta_hat = 0.0;   // extrapolated r -> infinity value
    double slope_hat = 0.0;   // c in E(r) = delta + c / r
    double limsup_hat = 0.0;  // max of E over the largest-half r tail
    double liminf_hat = 0.0;  // min over the same tail
    double residual = 0.0;    // max |fit - E| over the grid
    bool fallback = false;    // ill-conditioned fit: delta_hat = E at largest r
    std::vector<std::array<double, 3>> per_r;  // (r, E, stderr)
};

// Weighted least-squares fit E(r) = delta + c/r; weights 1/stderr^2 (equal
// when a stderr is zero or missing).
DensityEstimate extrapolate_density(const std::vector<std::array<double, 3>>& per_r);

struct BatteryRow {
    double r = 0.0;
    double value_a = 0.0, stderr_a = 0.0;
    double value_b = 0.0, stderr_b = 0.0;
    double gap = 0.0;
};

struct BatteryReport {
    std::string name;
    std::string arm_a, arm_b;
    std::vector<BatteryRow> rows;
    double final_gap = 0.0;   // decision statistic (largest r, or extrapolated)
    double threshold = 0.02;  // max(0.02, 2 * pooled stderr)
    bool pass = false;
    bool report_only = false;  // loose protocols: emitted without pass/fail
};

// Basic Assumption proxy: plain C_r vs perturbed C_r (outward bumps <= bump_limit).
BatteryReport boundary_perturbation_battery(const ExperimentPlan& plan, double bump_limit);

// Fundamental Theorem proxy: the plan's container family vs an alternative
// (report-only under the loose protocol).
BatteryReport container_independence_battery(const ExperimentPlan& plan,
                                             const std::string& alt_family);

struct GravityRow {
    double gravity = 0.0;
    double estimate = 0.0;
    double stderr_est = 0.0;
};

struct GravitySweep {
    std::vector<GravityRow> rows;
    double inf_hat = 0.0, sup_hat = 0.0;  // finite proxies over the grid
};

GravitySweep gravity_sweep(const ExperimentPlan& plan);

struct ShapeSweepRow {
    std::string solid_spec;
    double distance_to_ball = 0.0;  // log gamma
    double density = 0.0;
    double stderr_est = 0.0;
};

struct ShapeSweep {
    std::vector<ShapeSweepRow> rows;
    double max_density = 0.0, min_density = 0.0;
};

ShapeSweep shape_sweep(const ExperimentPlan& plan, const std::vector<std::string>& solid_specs);

} // namespace packlab
