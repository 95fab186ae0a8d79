#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "packlab/harness.hpp"
#include "packlab/stats.hpp"
#include "reference_tables.hpp"

namespace packlab::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path resolve_out_dir(const CommonOpts& common) {
    std::string dir = common.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("PACKLAB_OUT");
        dir = env && *env ? env : ".";
    }
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void note(const std::string& msg) { std::cerr << msg << "\n"; }

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write " + path.string());
    out << content;
}

json trial_json(const TrialResult& t) {
    return json{{"apparent_density", t.apparent_density},
                {"bulk_density", t.bulk_density},
                {"bulk_stderr", t.bulk_stderr},
                {"particle_count", t.particle_count},
                {"discarded", t.discarded},
                {"fill_height", t.fill_height},
                {"seed", t.seed},
                {"cycles_executed", t.cycles_executed}};
}

json record_json(const TrialRecord& r) {
    json j{{"r", r.r},
           {"gravity", r.gravity},
           {"trial_index", r.trial_index},
           {"seed", r.seed},
           {"failed", r.failed}};
    if (r.failed) j["error"] = r.error;
    else j["result"] = trial_json(r.result);
    return j;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

ProtocolSpec protocol_for(const PackOpts& opts) {
    ProtocolSpec spec;
    if (!opts.protocol_path.empty()) {
        spec = ProtocolSpec::load(opts.protocol_path);
    } else {
        spec.family = family_from_name(opts.family);
        if (spec.family == ProtocolFamily::LooseRotate) spec.agitation_cycles = 0;
    }
    if (opts.particles > 0) spec.target_count = opts.particles;
    if (opts.cycles >= 0) spec.agitation_cycles = opts.cycles;
    return spec;
}

void apply_overrides(ExperimentPlan& plan, const std::string& r_grid, int trials,
                     std::uint64_t seed) {
    if (!r_grid.empty()) plan.r_grid = parse_grid(r_grid);
    if (trials > 0) plan.trials = trials;
    if (seed != 0) plan.base_seed = seed;
    plan.validate();
}

std::string battery_csv(const BatteryReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "r,mean_a,stderr_a,mean_b,stderr_b,gap\n";
    for (const BatteryRow& row : report.rows)
        os << row.r << "," << row.value_a << "," << row.stderr_a << "," << row.value_b << ","
           << row.stderr_b << "," << row.gap << "\n";
    return os.str();
}

json battery_json(const BatteryReport& report) {
    json rows = json::array();
    for (const BatteryRow& row : report.rows)
        rows.push_back({{"r", row.r},
                        {"mean_a", row.value_a},
                        {"stderr_a", row.stderr_a},
                        {"mean_b", row.value_b},
                        {"stderr_b", row.stderr_b},
                        {"gap", row.gap}});
    json j{{"battery", report.name},   {"arm_a", report.arm_a},
           {"arm_b", report.arm_b},    {"rows", rows},
           {"final_gap", report.final_gap}, {"threshold", report.threshold},
           {"report_only", report.report_only}};
    if (!report.report_only) j["pass"] = report.pass;
    return j;
}

// comparison rows for the reproduce command
struct CompareRow {
    std::string label;
    double reference = 0.0;
    double reference_err = 0.0;  // 0: not stated
    bool simulated = false;
    double value = 0.0;
    std::string tag;  // REPRODUCED | DEVIATES | REPORTED-ONLY
};

json compare_json(const std::string& table, const std::string& citation,
                  const std::vector<CompareRow>& rows) {
    json out{{"table", table}, {"citation", citation}, {"rows", json::array()}};
    for (const CompareRow& row : rows) {
        json j{{"label", row.label}, {"reference", row.reference}, {"tag", row.tag}};
        if (row.reference_err > 0) j["reference_error"] = row.reference_err;
        if (row.simulated) {
            j["simulated"] = row.value;
            j["difference"] = std::abs(row.value - row.reference);
        }
        out["rows"].push_back(j);
    }
    return out;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "label,reference,reference_error,simulated,difference,tag\n";
    for (const CompareRow& row : rows) {
        os << row.label << "," << row.reference << "," << row.reference_err << ",";
        if (row.simulated) os << row.value << "," << std::abs(row.value - row.reference);
        else os << ",";
        os << "," << row.tag << "\n";
    }
    return os.str();
}

void print_compare(const std::vector<CompareRow>& rows) {
    for (const CompareRow& row : rows) {
        std::ostringstream os;
        os.precision(4);
        os << "  " << row.label << ": reference " << row.reference;
        if (row.simulated)
            os << ", simulated " << row.value << ", |diff| "
               << std::abs(row.value - row.reference);
        os << "  [" << row.tag << "]";
        note(os.str());
    }
}

ProtocolSpec reproduce_dense(const ReproduceOpts& opts, double gravity) {
    ProtocolSpec spec = ProtocolSpec::dense_pour_tap();
    spec.target_count = opts.particles;
    spec.agitation_cycles = opts.cycles;
    spec.gravity = gravity;
    return spec;
}

ProtocolSpec reproduce_loose(const ReproduceOpts& opts, double gravity) {
    ProtocolSpec spec = ProtocolSpec::loose_rotate();
    spec.target_count = opts.particles;
    spec.gravity = gravity;
    return spec;
}

double run_density(const ConvexSolid& solid, double r_in_d, const ProtocolSpec& spec,
                   std::uint64_t seed, int trials, PackingState* state_out = nullptr) {
    Container container = Container::cylinder(r_in_d * solid.diameter());
    double sum = 0;
    for (int i = 0; i < trials; ++i) {
        TrialResult t = run_protocol(solid, container, spec, seed + std::uint64_t(i),
                                     i == 0 ? state_out : nullptr);
        sum += t.bulk_density;
    }
    return sum / trials;
}

std::string profile_text(const std::vector<std::pair<double, double>>& profile, bool gnuplot) {
    std::ostringstream os;
    os.precision(10);
    if (!gnuplot) os << "x,f\n";
    for (auto [x, f] : profile) os << x << (gnuplot ? " " : ",") << f << "\n";
    return os.str();
}

std::vector<double> default_x_grid() {
    std::vector<double> xs;
    for (int i = 0; i <= 50; ++i) xs.push_back(0.02 * i);
    return xs;
}

} // namespace

int cmd_pack(const CommonOpts& common, const PackOpts& opts) {
    fs::path out = resolve_out_dir(common);
    ConvexSolid solid = parse_solid_spec(opts.solid);
    Container container = Container::parse(opts.container);
    ProtocolSpec spec = protocol_for(opts);

    note("packing " + opts.solid + " into " + opts.container + " under " +
         family_name(spec.family) + ", seed " + std::to_string(opts.seed));
    PackingState state{container, solid, {}, opts.seed, {}};
    TrialResult result = run_protocol(solid, container, spec, opts.seed, &state);

    fs::path snap = out / "packing.csv";
    write_snapshot(state, snap.string());

    json record{{"solid", solid.spec_string()},
                {"container", container.spec_string()},
                {"protocol", spec.to_text()},
                {"seed", opts.seed},
                {"snapshot", snap.string()},
                {"result", trial_json(result)}};
    record["result"]["density_history"] = result.density_history;
    write_text(out / "result.json", record.dump(2) + "\n");
    emit(record);
    note("bulk density " + std::to_string(result.bulk_density) + " (apparent " +
         std::to_string(result.apparent_density) + ")");

    if (common.check) {
        double lo, hi;
        if (!solid.is_ball()) {
            lo = 0.35, hi = 0.75;
        } else if (spec.family == ProtocolFamily::LooseRotate) {
            lo = 0.54, hi = 0.61;
        } else {
            lo = 0.62, hi = 0.66;
        }
        if (!(result.bulk_density >= lo && result.bulk_density <= hi)) {
            note("check: bulk density outside [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]");
            return EXIT_CHECK_FAILED;
        }
    }
    return EXIT_OK;
}

int cmd_analyze(const CommonOpts& common, const AnalyzeOpts& opts) {
    fs::path out = resolve_out_dir(common);
    PackingState state = read_snapshot(opts.snapshot);
    double d = state.solid.diameter();

    json summary{{"snapshot", opts.snapshot},
                 {"particle_count", state.count()},
                 {"fill_height", fill_height(state)},
                 {"apparent_density", apparent_density(state)}};
    try {
        BulkDensity bulk = bulk_density_auto(state);
        summary["bulk_density"] = bulk.value;
        summary["bulk_stderr"] = bulk.stderr_est;
    } catch (const std::invalid_argument& e) {
        note(std::string("bulk density unavailable: ") + e.what());
    }

    Cluster cluster = interior_cluster(state, opts.margin_d * d);
    summary["cluster_size"] = cluster.base.size();
    if (cluster.empty()) {
        note("warning: empty interior cluster (margin " + std::to_string(opts.margin_d) +
             " d); no structural statistics");
        write_text(out / "summary.json", summary.dump(2) + "\n");
        emit(summary);
        return EXIT_OK;
    }

    auto profile = radial_profile(cluster, default_x_grid());
    write_text(out / (common.gnuplot ? "radial_profile.dat" : "radial_profile.csv"),
               profile_text(profile, common.gnuplot));
    summary["contact_number"] = contact_number(cluster, opts.tau);
    summary["contact_tau"] = opts.tau;

    VoronoiResult voro = voronoi_cells(cluster, opts.cutoff_d * d);
    FaceHistogram hist = face_number_distribution(voro.cells);
    {
        std::ostringstream os;
        os.precision(10);
        if (!common.gnuplot) os << "faces,fraction\n";
        for (auto [faces, fraction] : hist.fraction)
            os << faces << (common.gnuplot ? " " : ",") << fraction << "\n";
        write_text(out / (common.gnuplot ? "face_histogram.dat" : "face_histogram.csv"),
                   os.str());
    }
    summary["voronoi_cells"] = hist.cell_count;
    summary["voronoi_excluded_unbounded"] = voro.excluded_unbounded;
    summary["mean_faces"] = hist.mean;
    summary["mode_faces"] = hist.mode;

    write_text(out / "summary.json", summary.dump(2) + "\n");
    emit(summary);
    note("analyzed " + std::to_string(state.count()) + " particles, " +
         std::to_string(cluster.base.size()) + " interior");
    return EXIT_OK;
}

int cmd_distance(const CommonOpts&, const DistanceOpts& opts) {
    ConvexSolid a = parse_solid_spec(opts.solid_a);
    ConvexSolid b = parse_solid_spec(opts.solid_b);
    ShapeMetricOptions metric;
    metric.rotation_starts = opts.budget;
    metric.allow_reflection = !opts.no_reflect;
    metric.force_general = !opts.exact_ball && !a.is_ball() && !b.is_ball();
    metric.seed = opts.seed;
    ShapeDistanceResult res = shape_distance(a, b, metric);

    json j{{"solid_a", a.spec_string()},
           {"solid_b", b.spec_string()},
           {"gamma", res.gamma},
           {"log_gamma", res.log_gamma},
           {"inner_margin", res.inner_margin},
           {"outer_margin", res.outer_margin},
           {"exact", res.exact},
           {"witness",
            {{"scale", res.witness_sigma.scale},
             {"rotation",
              {res.witness_sigma.rotation.w, res.witness_sigma.rotation.x,
               res.witness_sigma.rotation.y, res.witness_sigma.rotation.z}},
             {"reflect", res.witness_sigma.reflect},
             {"translation",
              {res.witness_sigma.translation.x, res.witness_sigma.translation.y,
               res.witness_sigma.translation.z}},
             {"x", {res.witness_x.x, res.witness_x.y, res.witness_x.z}}}}};
    emit(j);
    note("||K1, K2|| = " + std::to_string(res.log_gamma) +
         (res.exact ? " (exact)" : " (certified upper bound)"));
    return EXIT_OK;
}

int cmd_sweep(const CommonOpts& common, const SweepOpts& opts) {
    fs::path out = resolve_out_dir(common);
    ExperimentPlan plan = ExperimentPlan::load(opts.plan_path);
    apply_overrides(plan, opts.r_grid, opts.trials, opts.seed);

    if (opts.kind == "density") {
        std::ofstream lines(out / "trials.jsonl", std::ios::binary);
        std::vector<std::array<double, 3>> per_r;
        std::ostringstream csv;
        csv.precision(10);
        csv << "r,mean,stderr,n\n";
        for (std::size_t ri = 0; ri < plan.r_grid.size(); ++ri) {
            auto records = run_trials(plan, ri, 0);
            std::vector<double> densities;
            for (const TrialRecord& rec : records) {
                lines << record_json(rec).dump() << "\n";
                if (!rec.failed) densities.push_back(rec.result.bulk_density);
            }
            Expectation e = expectation(densities);
            per_r.push_back({plan.r_grid[ri], e.mean, e.stderr_est});
            csv << plan.r_grid[ri] << "," << e.mean << "," << e.stderr_est << "," << e.n_used
                << "\n";
        }
        write_text(out / "per_r.csv", csv.str());
        json j{{"plan", plan.to_text()}, {"kind", "density"}};
        if (per_r.size() >= 3) {
            DensityEstimate est = extrapolate_density(per_r);
            j["delta_hat"] = est.delta_hat;
            j["slope_hat"] = est.slope_hat;
            j["limsup_hat"] = est.limsup_hat;
            j["liminf_hat"] = est.liminf_hat;
            j["residual"] = est.residual;
            j["fallback"] = est.fallback;
            if (common.check &&
                !(est.liminf_hat <= est.delta_hat + 1e-12 &&
                  est.delta_hat <= est.limsup_hat + 1e-12)) {
                emit(j);
                note("check: extrapolated estimate outside the [liminf, limsup] tail window");
                return EXIT_CHECK_FAILED;
            }
        } else {
            j["delta_hat"] = per_r.back()[1];
            j["note"] = "fewer than 3 r values: largest-r mean reported";
        }
        emit(j);
        return EXIT_OK;
    }
    if (opts.kind == "gravity") {
        GravitySweep sweep = gravity_sweep(plan);
        std::ostringstream csv;
        csv.precision(10);
        csv << "gravity,estimate,stderr\n";
        json rows = json::array();
        for (const GravityRow& row : sweep.rows) {
            csv << row.gravity << "," << row.estimate << "," << row.stderr_est << "\n";
            rows.push_back({{"gravity", row.gravity},
                            {"estimate", row.estimate},
                            {"stderr", row.stderr_est}});
        }
        write_text(out / "gravity_sweep.csv", csv.str());
        emit(json{{"kind", "gravity"},
                  {"rows", rows},
                  {"inf_hat", sweep.inf_hat},
                  {"sup_hat", sweep.sup_hat}});
        return EXIT_OK;
    }
    if (opts.kind == "shape") {
        std::vector<std::string> solids = opts.solids;
        if (solids.empty())
            solids = {"ball:r=0.5",         "tetrahedron:edge=1", "cube:edge=1",
                      "octahedron:edge=1",  "dodecahedron:edge=1", "icosahedron:edge=1"};
        ShapeSweep sweep = shape_sweep(plan, solids);
        std::ostringstream csv;
        csv.precision(10);
        csv << "solid,distance_to_ball,density,stderr\n";
        json rows = json::array();
        for (const ShapeSweepRow& row : sweep.rows) {
            csv << row.solid_spec << "," << row.distance_to_ball << "," << row.density << ","
                << row.stderr_est << "\n";
            rows.push_back({{"solid", row.solid_spec},
                            {"distance_to_ball", row.distance_to_ball},
                            {"density", row.density},
                            {"stderr", row.stderr_est}});
        }
        write_text(out / "shape_sweep.csv", csv.str());
        emit(json{{"kind", "shape"},
                  {"rows", rows},
                  {"max_density", sweep.max_density},
                  {"min_density", sweep.min_density}});
        return EXIT_OK;
    }
    throw std::invalid_argument("unknown sweep kind: " + opts.kind);
}

int cmd_battery(const CommonOpts& common, const BatteryOpts& opts) {
    fs::path out = resolve_out_dir(common);
    ExperimentPlan plan = ExperimentPlan::load(opts.plan_path);
    apply_overrides(plan, opts.r_grid, opts.trials, opts.seed);

    BatteryReport report;
    if (opts.which == "boundary") {
        double d = parse_solid_spec(plan.solid_spec).diameter();
        report = boundary_perturbation_battery(plan, opts.bump_fraction * d);
    } else if (opts.which == "container") {
        report = container_independence_battery(plan, opts.alt_container);
    } else {
        throw std::invalid_argument("unknown battery: " + opts.which);
    }

    write_text(out / (report.name + ".csv"), battery_csv(report));
    json j = battery_json(report);
    write_text(out / (report.name + ".json"), j.dump(2) + "\n");
    emit(j);
    if (report.report_only) {
        note(report.name + ": report only (no pass/fail under the loose protocol)");
        return EXIT_OK;
    }
    note(report.name + (report.pass ? ": PASS" : ": FAIL") + " (gap " +
         std::to_string(report.final_gap) + " vs threshold " +
         std::to_string(report.threshold) + ")");
    if (common.check && !report.pass) return EXIT_CHECK_FAILED;
    return EXIT_OK;
}

int cmd_reproduce(const CommonOpts& common, const ReproduceOpts& opts) {
    fs::path out = resolve_out_dir(common);
    const json& ref = reference_values();
    ConvexSolid ball = make_ball(0.5);
    std::vector<CompareRow> rows;
    std::string citation;
    bool check_failed = false;

    if (opts.table == "T1") {
        citation = ref["T1"]["citation"];
        double dense = run_density(ball, opts.r_in_d, reproduce_dense(opts, 1.0), opts.seed,
                                   opts.trials);
        double loose = run_density(ball, opts.r_in_d, reproduce_loose(opts, 1.0), opts.seed,
                                   opts.trials);
        for (const auto& r : ref["T1"]["rows"]) {
            std::string cond = "time " + std::to_string(double(r[0])) + "s, height " +
                               std::to_string(double(r[1])) + "cm";
            // filling-time / filling-height effects are outside the engine's
            // quasi-static scope: reported alongside a single reference run
            rows.push_back({"loose, " + cond, r[2], 0, true, loose, "REPORTED-ONLY"});
            rows.push_back({"dense, " + cond, r[3], 0, true, dense, "REPORTED-ONLY"});
        }
    } else if (opts.table == "T2") {
        citation = ref["T2"]["citation"];
        for (const auto& r : ref["T2"]["rows"]) {
            std::string material = r[0];
            double g = r[1];
            double dense = run_density(ball, opts.r_in_d, reproduce_dense(opts, g), opts.seed,
                                       opts.trials);
            double loose = run_density(ball, opts.r_in_d, reproduce_loose(opts, g), opts.seed,
                                       opts.trials);
            double dref = r[2], lref = r[5];
            auto tag = [](double sim, double refv, double tol) {
                return std::abs(sim - refv) <= tol ? "REPRODUCED" : "DEVIATES";
            };
            rows.push_back({material + " dense", dref, r[3].is_null() ? 0.0 : double(r[3]),
                            true, dense, tag(dense, dref, 0.02)});
            rows.push_back({material + " loose", lref, r[6].is_null() ? 0.0 : double(r[6]),
                            true, loose, tag(loose, lref, 0.03)});
            if (material == "steel" &&
                (rows[rows.size() - 2].tag != "REPRODUCED" || rows.back().tag != "REPRODUCED"))
                check_failed = true;
        }
    } else if (opts.table == "T3") {
        citation = ref["T3"]["citation"];
        PackingState state{Container::cylinder(1), ball, {}, 0, {}};
        run_density(ball, opts.r_in_d, reproduce_dense(opts, 1.0), opts.seed, 1, &state);
        double d = ball.diameter();
        Cluster cluster = interior_cluster(state, 2.0 * d);
        FaceHistogram hist = face_number_distribution(voronoi_cells(cluster, 4.0 * d).cells);
        auto faces = ref["T3"]["face_numbers"];
        auto fracs = ref["T3"]["fractions_percent"];
        for (std::size_t i = 0; i < faces.size(); ++i) {
            int f = faces[i];
            double sim = hist.fraction.count(f) ? 100.0 * hist.fraction.at(f) : 0.0;
            rows.push_back({"faces=" + std::to_string(f) + " (%)", fracs[i], 0, true, sim,
                            "REPORTED-ONLY"});
        }
        double mean_ref = ref["T3"]["mean_faces"];
        bool ok = hist.mean >= 13.8 && hist.mean <= 14.7;
        rows.push_back({"mean faces", mean_ref, 0, true, hist.mean,
                        ok ? "REPRODUCED" : "DEVIATES"});
        if (!ok) check_failed = true;
    } else if (opts.table == "T4") {
        citation = ref["T4"]["citation"];
        ConvexSolid tetra = make_platonic(PlatonicKind::Tetrahedron, 1.0);
        ReproduceOpts sub = opts;
        sub.particles = std::min<std::size_t>(opts.particles, 300);
        for (const auto& r : ref["T4"]["rows"]) {
            double g = r[0];
            double dense = run_density(tetra, opts.r_in_d, reproduce_dense(sub, g), opts.seed,
                                       opts.trials);
            double loose = run_density(tetra, opts.r_in_d, reproduce_loose(sub, g), opts.seed,
                                       opts.trials);
            std::ostringstream gl;
            gl.precision(4);
            gl << "g=" << g;
            // ideal quasi-static tetrahedra vs physical dice: reported only
            rows.push_back({gl.str() + " dense", r[1], r[2], true, dense, "REPORTED-ONLY"});
            rows.push_back({gl.str() + " loose", r[4], r[5], true, loose, "REPORTED-ONLY"});
        }
    } else if (opts.table == "T5") {
        citation = ref["T5"]["citation"];
        ReproduceOpts sub = opts;
        sub.particles = std::min<std::size_t>(opts.particles, 300);
        for (const auto& r : ref["T5"]["rows"]) {
            std::string name = r[0];
            ConvexSolid solid = parse_solid_spec(name + ":edge=1");
            double dense = run_density(solid, opts.r_in_d, reproduce_dense(sub, 1.16),
                                       opts.seed, opts.trials);
            double loose = run_density(solid, opts.r_in_d, reproduce_loose(sub, 1.16),
                                       opts.seed, opts.trials);
            // physical dice have rounded edges; ideal solids are reported only
            rows.push_back({name + " dense", r[1], r[2], true, dense, "REPORTED-ONLY"});
            rows.push_back({name + " loose", r[3], r[4], true, loose, "REPORTED-ONLY"});
        }
    } else if (opts.table == "fig1") {
        citation = ref["fig1"]["citation"];
        PackingState state{Container::cylinder(1), ball, {}, 0, {}};
        run_density(ball, opts.r_in_d, reproduce_dense(opts, 1.0), opts.seed, 1, &state);
        double d = ball.diameter();
        Cluster cluster = interior_cluster(state, 2.0 * d);
        auto profile = radial_profile(cluster, default_x_grid());
        write_text(out / (common.gnuplot ? "fig1_profile.dat" : "fig1_profile.csv"),
                   profile_text(profile, common.gnuplot));
        rows.push_back({"f(0.01) (contact proxy)", 6.0, 0, true,
                        contact_number(cluster, 0.01), "REPORTED-ONLY"});
        note("radial profile written for external plotting");
    } else {
        throw std::invalid_argument("unknown table id: " + opts.table +
                                    " (expected T1..T5 or fig1)");
    }

    write_text(out / ("reproduce_" + opts.table + ".csv"), compare_csv(rows));
    emit(compare_json(opts.table, citation, rows));
    print_compare(rows);
    if (common.check && check_failed) return EXIT_CHECK_FAILED;
    return EXIT_OK;
}

} // namespace packlab::cli
