#include "packlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace packlab {

void ExperimentPlan::validate() const {
    if (r_grid.empty()) throw std::invalid_argument("plan: r_grid must be non-empty");
    for (std::size_t i = 0; i + 1 < r_grid.size(); ++i)
        if (!(r_grid[i] < r_grid[i + 1]))
            throw std::invalid_argument("plan: r_grid must be strictly increasing");
    for (double g : gravity_grid)
        if (!(g > 0)) throw std::invalid_argument("plan: gravity values must be > 0");
    if (gravity_grid.empty()) throw std::invalid_argument("plan: gravity_grid must be non-empty");
    if (trials < 1) throw std::invalid_argument("plan: trials >= 1");
    if (container_family != "cylinder" && container_family != "cube")
        throw std::invalid_argument("plan: unknown container family " + container_family);
    protocol.validate();
    parse_solid_spec(solid_spec);  // throws on a bad spec
}

namespace {

std::string join_grid(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::vector<double> split_grid(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

} // namespace

std::string ExperimentPlan::to_text() const {
    std::ostringstream os;
    os << "solid=" << solid_spec << "\n"
       << "container=" << container_family << "\n"
       << "r_grid=" << join_grid(r_grid) << "\n"
       << "gravity_grid=" << join_grid(gravity_grid) << "\n"
       << "trials=" << trials << "\n"
       << "base_seed=" << base_seed << "\n";
    std::istringstream proto(protocol.to_text());
    std::string line;
    while (std::getline(proto, line)) os << "protocol." << line << "\n";
    return os.str();
}

ExperimentPlan ExperimentPlan::from_text(const std::string& text) {
    ExperimentPlan plan;
    std::ostringstream proto_text;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("plan line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key.rfind("protocol.", 0) == 0) proto_text << line.substr(9) << "\n";
        else if (key == "solid") plan.solid_spec = val;
        else if (key == "container") plan.container_family = val;
        else if (key == "r_grid") plan.r_grid = split_grid(val);
        else if (key == "gravity_grid") plan.gravity_grid = split_grid(val);
        else if (key == "trials") plan.trials = std::stoi(val);
        else if (key == "base_seed") plan.base_seed = std::stoull(val);
        else throw std::invalid_argument("plan: unknown key " + key);
    }
    std::string pt = proto_text.str();
    if (!pt.empty()) plan.protocol = ProtocolSpec::from_text(pt);
    plan.validate();
    return plan;
}

ExperimentPlan ExperimentPlan::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("plan: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t cell_id, int trial_index) {
    return CounterRng::mix64(base_seed ^ CounterRng::mix64(cell_id)) +
           std::uint64_t(trial_index);
}

Container make_plan_container(const std::string& family, double r) {
    if (family == "cylinder") return Container::cylinder(r);
    if (family == "cube")
        return Container::scaled_convex(make_platonic(PlatonicKind::Cube, 1.0), 2.0 * r);
    throw std::invalid_argument("unknown container family: " + family);
}

namespace {

std::vector<TrialRecord> run_cell(const ExperimentPlan& plan, const Container& container,
                                  std::size_t r_index, std::size_t g_index) {
    ConvexSolid solid = parse_solid_spec(plan.solid_spec);
    ProtocolSpec spec = plan.protocol;
    spec.gravity = plan.gravity_grid.at(g_index);
    std::uint64_t cell_id = g_index * plan.r_grid.size() + r_index;

    std::vector<TrialRecord> out;
    for (int i = 0; i < plan.trials; ++i) {
        TrialRecord rec;
        rec.r = plan.r_grid.at(r_index);
        rec.gravity = spec.gravity;
        rec.trial_index = i;
        rec.seed = trial_seed(plan.base_seed, cell_id, i);
        try {
            rec.result = run_protocol(solid, container, spec, rec.seed);
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

Expectation cell_expectation(const std::vector<TrialRecord>& records) {
    std::vector<double> densities;
    for (const TrialRecord& r : records)
        if (!r.failed) densities.push_back(r.result.bulk_density);
    return expectation(densities);
}

} // namespace

std::vector<TrialRecord> run_trials(const ExperimentPlan& plan, std::size_t r_index,
                                    std::size_t g_index) {
    plan.validate();
    Container container = make_plan_container(plan.container_family, plan.r_grid.at(r_index));
    return run_cell(plan, container, r_index, g_index);
}

Expectation expectation(const std::vector<double>& densities) {
    Expectation e;
    e.n_used = int(densities.size());
    if (densities.empty()) return e;
    double sum = 0;
    for (double d : densities) sum += d;
    e.mean = sum / double(densities.size());
    if (densities.size() > 1) {
        double ss = 0;
        for (double d : densities) ss += (d - e.mean) * (d - e.mean);
        double var = ss / double(densities.size() - 1);
        e.stderr_est = std::sqrt(var / double(densities.size()));
    }
    if (densities.size() >= 4) {
        std::size_t half = densities.size() / 2;
        double first = 0, last = 0;
        for (std::size_t i = 0; i < half; ++i) first += densities[i];
        for (std::size_t i = densities.size() - half; i < densities.size(); ++i)
            last += densities[i];
        first /= double(half);
        last /= double(half);
        e.stable = std::abs(last - first) < 2.0 * std::max(e.stderr_est, 1e-12);
        if (e.stderr_est == 0.0) e.stable = first == last;
    }
    return e;
}

DensityEstimate extrapolate_density(const std::vector<std::array<double, 3>>& per_r) {
    if (per_r.size() < 3)
        throw std::invalid_argument("extrapolate_density: need >= 3 distinct r values");
    DensityEstimate est;
    est.per_r = per_r;

    // weighted least squares for E(r) = delta + c / r
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [r, E, se] : per_r) {
        if (!(r > 0)) throw std::invalid_argument("extrapolate_density: r must be > 0");
        double w = se > 0 ? 1.0 / (se * se) : 1.0;
        double x = 1.0 / r;
        sw += w;
        sx += w * x;
        sy += w * E;
        sxx += w * x * x;
        sxy += w * x * E;
    }
    double det = sw * sxx - sx * sx;
    bool ill = std::abs(det) < 1e-14 * sw * sxx;
    if (!ill) {
        est.delta_hat = (sxx * sy - sx * sxy) / det;
        est.slope_hat = (sw * sxy - sx * sy) / det;
        for (const auto& [r, E, se] : per_r)
            est.residual = std::max(est.residual,
                                    std::abs(est.delta_hat + est.slope_hat / r - E));
    }
    if (ill || !(est.delta_hat > 0.0) || !(est.delta_hat < 1.0)) {
        est.fallback = true;
        est.delta_hat = per_r.back()[1];  // E at the largest r
        est.slope_hat = 0.0;
        est.residual = 0.0;
    }

    // limsup/liminf proxies from the largest-half tail of the grid
    std::size_t tail = (per_r.size() + 1) / 2;
    est.limsup_hat = -1.0;
    est.liminf_hat = 2.0;
    for (std::size_t i = per_r.size() - tail; i < per_r.size(); ++i) {
        est.limsup_hat = std::max(est.limsup_hat, per_r[i][1]);
        est.liminf_hat = std::min(est.liminf_hat, per_r[i][1]);
    }
    return est;
}

BatteryReport boundary_perturbation_battery(const ExperimentPlan& plan, double bump_limit) {
    plan.validate();
    if (!(bump_limit >= 0))
        throw std::invalid_argument("boundary battery: bump_limit must be >= 0");
    ConvexSolid solid = parse_solid_spec(plan.solid_spec);
    double d = solid.diameter();
    if (bump_limit > d)
        throw std::invalid_argument("boundary battery: bumps beyond d break C_r <= C~ <= C_{r+d}");

    BatteryReport report;
    report.name = "boundary_perturbation";
    report.arm_a = "cylinder";
    report.arm_b = "perturbed_cylinder";
    for (std::size_t ri = 0; ri < plan.r_grid.size(); ++ri) {
        double r = plan.r_grid[ri];
        Container plain = Container::cylinder(r);
        // bump grid scale ~ particle size; bump pattern seeded from the plan
        int nt = std::max(8, int(2.0 * M_PI * r / d));
        int nz = std::max(4, int(2.0 * r / d));
        Container bumpy = Container::perturbed_cylinder(
            r, bump_limit, nt, nz, 1.0, CounterRng::mix64(plan.base_seed ^ (0xB0 + ri)));
        auto ea = cell_expectation(run_cell(plan, plain, ri, 0));
        auto eb = cell_expectation(run_cell(plan, bumpy, ri, 0));
        report.rows.push_back({r, ea.mean, ea.stderr_est, eb.mean, eb.stderr_est,
                               std::abs(ea.mean - eb.mean)});
    }
    const BatteryRow& last = report.rows.back();
    double pooled = std::sqrt(last.stderr_a * last.stderr_a + last.stderr_b * last.stderr_b);
    report.final_gap = last.gap;
    report.threshold = std::max(0.02, 2.0 * pooled);
    report.pass = report.final_gap < report.threshold;
    return report;
}

BatteryReport container_independence_battery(const ExperimentPlan& plan,
                                             const std::string& alt_family) {
    plan.validate();
    BatteryReport report;
    report.name = "container_independence";
    report.arm_a = plan.container_family;
    report.arm_b = alt_family;
    report.report_only = plan.protocol.family == ProtocolFamily::LooseRotate;

    std::vector<std::array<double, 3>> per_r_a, per_r_b;
    for (std::size_t ri = 0; ri < plan.r_grid.size(); ++ri) {
        double r = plan.r_grid[ri];
        auto ea = cell_expectation(run_cell(plan, make_plan_container(plan.container_family, r),
                                            ri, 0));
        auto eb = cell_expectation(run_cell(plan, make_plan_container(alt_family, r), ri, 0));
        report.rows.push_back({r, ea.mean, ea.stderr_est, eb.mean, eb.stderr_est,
                               std::abs(ea.mean - eb.mean)});
        per_r_a.push_back({r, ea.mean, ea.stderr_est});
        per_r_b.push_back({r, eb.mean, eb.stderr_est});
    }
    double est_a, est_b;
    if (plan.r_grid.size() >= 3) {
        est_a = extrapolate_density(per_r_a).delta_hat;
        est_b = extrapolate_density(per_r_b).delta_hat;
    } else {
        est_a = per_r_a.back()[1];
        est_b = per_r_b.back()[1];
    }
    const BatteryRow& last = report.rows.back();
    double pooled = std::sqrt(last.stderr_a * last.stderr_a + last.stderr_b * last.stderr_b);
    report.final_gap = std::abs(est_a - est_b);
    report.threshold = std::max(0.02, 2.0 * pooled);
    report.pass = report.report_only ? false : report.final_gap < report.threshold;
    return report;
}

GravitySweep gravity_sweep(const ExperimentPlan& plan) {
    plan.validate();
    GravitySweep sweep;
    for (std::size_t gi = 0; gi < plan.gravity_grid.size(); ++gi) {
        std::vector<std::array<double, 3>> per_r;
        Expectation last;
        for (std::size_t ri = 0; ri < plan.r_grid.size(); ++ri) {
            last = cell_expectation(run_trials(plan, ri, gi));
            per_r.push_back({plan.r_grid[ri], last.mean, last.stderr_est});
        }
        GravityRow row;
        row.gravity = plan.gravity_grid[gi];
        if (per_r.size() >= 3) {
            row.estimate = extrapolate_density(per_r).delta_hat;
        } else {
            row.estimate = last.mean;
        }
        row.stderr_est = last.stderr_est;
        sweep.rows.push_back(row);
    }
    sweep.inf_hat = sweep.rows.front().estimate;
    sweep.sup_hat = sweep.rows.front().estimate;
    for (const GravityRow& row : sweep.rows) {
        sweep.inf_hat = std::min(sweep.inf_hat, row.estimate);
        sweep.sup_hat = std::max(sweep.sup_hat, row.estimate);
    }
    return sweep;
}

ShapeSweep shape_sweep(const ExperimentPlan& plan, const std::vector<std::string>& solid_specs) {
    if (solid_specs.empty()) throw std::invalid_argument("shape_sweep: no solids");
    ShapeSweep sweep;
    ConvexSolid unit_ball = make_ball(1.0);
    for (const std::string& spec : solid_specs) {
        ExperimentPlan sub = plan;
        sub.solid_spec = spec;
        sub.validate();
        ConvexSolid solid = parse_solid_spec(spec);

        ShapeSweepRow row;
        row.solid_spec = spec;
        row.distance_to_ball = solid.is_ball() ? 0.0 : shape_distance(unit_ball, solid).log_gamma;

        // density at the largest r of the grid
        auto e = cell_expectation(run_trials(sub, sub.r_grid.size() - 1, 0));
        row.density = e.mean;
        row.stderr_est = e.stderr_est;
        sweep.rows.push_back(std::move(row));
    }
    sweep.max_density = sweep.rows.front().density;
    sweep.min_density = sweep.rows.front().density;
    for (const ShapeSweepRow& row : sweep.rows) {
        sweep.max_density = std::max(sweep.max_density, row.density);
        sweep.min_density = std::min(sweep.min_density, row.density);
    }
    return sweep;
}

} // namespace packlab
