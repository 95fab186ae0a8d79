#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace packlab::cli;

    CLI::App app{"packlab: seedable random-packing experiments, structural statistics, "
                 "shape distances, and invariance test batteries"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--out", common.out_dir,
                   "output directory (default: $PACKLAB_OUT or the working directory)");
    app.add_option("--format", common.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_flag("--check", common.check, "exit nonzero on an acceptance-range miss");
    app.add_flag("--gnuplot", common.gnuplot, "two-column space-separated plot data");

    PackOpts pack;
    auto* cmd_pack_ = app.add_subcommand("pack", "run one packing experiment");
    cmd_pack_->add_option("--solid", pack.solid, "solid spec, e.g. ball:r=0.5 or cube:edge=1");
    cmd_pack_->add_option("--container", pack.container, "container spec, e.g. cylinder:r=6");
    cmd_pack_->add_option("--protocol", pack.protocol_path, "protocol file (key=value)")
        ->check(CLI::ExistingFile);
    cmd_pack_->add_option("--family", pack.family,
                          "protocol family when no file is given")
        ->check(CLI::IsMember({"dense_pour_tap", "dense_ideal", "loose_rotate"}));
    cmd_pack_->add_option("--seed", pack.seed, "trial seed");
    cmd_pack_->add_option("--particles", pack.particles, "target particle count");
    cmd_pack_->add_option("--cycles", pack.cycles, "agitation cycle override");

    AnalyzeOpts analyze;
    auto* cmd_analyze_ = app.add_subcommand("analyze", "structural statistics of a snapshot");
    cmd_analyze_->add_option("snapshot", analyze.snapshot, "packing snapshot CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_analyze_->add_option("--margin", analyze.margin_d, "interior margin in diameters");
    cmd_analyze_->add_option("--cutoff", analyze.cutoff_d, "Voronoi cutoff in diameters");
    cmd_analyze_->add_option("--tau", analyze.tau, "contact tolerance");

    DistanceOpts dist;
    auto* cmd_distance_ = app.add_subcommand("distance", "shape distance between two solids");
    cmd_distance_->add_option("solid_a", dist.solid_a, "first solid spec")->required();
    cmd_distance_->add_option("solid_b", dist.solid_b, "second solid spec")->required();
    cmd_distance_->add_option("--budget", dist.budget, "rotation restarts");
    cmd_distance_->add_flag("!--no-exact-ball", dist.exact_ball,
                            "force the general solver for ball cases");
    cmd_distance_->add_flag("--no-reflect", dist.no_reflect,
                            "exclude reflections from the similarity group");
    cmd_distance_->add_option("--metric-seed", dist.seed, "rotation start generator seed");

    SweepOpts sweep;
    auto* cmd_sweep_ = app.add_subcommand("sweep", "parameter sweeps over a plan");
    cmd_sweep_->add_option("--plan", sweep.plan_path, "experiment plan file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_sweep_->add_option("--kind", sweep.kind, "density | gravity | shape")
        ->check(CLI::IsMember({"density", "gravity", "shape"}));
    cmd_sweep_->add_option("--solids", sweep.solids, "solid specs for the shape sweep");
    cmd_sweep_->add_option("--r-grid", sweep.r_grid, "override, comma separated");
    cmd_sweep_->add_option("--trials", sweep.trials, "override trials per cell");
    cmd_sweep_->add_option("--seed", sweep.seed, "override base seed");

    BatteryOpts battery;
    auto* cmd_battery_ = app.add_subcommand("battery", "invariance test batteries");
    cmd_battery_->add_option("--plan", battery.plan_path, "experiment plan file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_battery_->add_option("--which", battery.which, "boundary | container")
        ->check(CLI::IsMember({"boundary", "container"}));
    cmd_battery_->add_option("--alt-container", battery.alt_container,
                             "second arm container family");
    cmd_battery_->add_option("--bump", battery.bump_fraction,
                             "boundary bump limit as a fraction of d");
    cmd_battery_->add_option("--r-grid", battery.r_grid, "override, comma separated");
    cmd_battery_->add_option("--trials", battery.trials, "override trials per cell");
    cmd_battery_->add_option("--seed", battery.seed, "override base seed");

    ReproduceOpts reproduce;
    auto* cmd_reproduce_ =
        app.add_subcommand("reproduce", "side-by-side comparison against published tables");
    cmd_reproduce_->add_option("table", reproduce.table, "T1 | T2 | T3 | T4 | T5 | fig1")
        ->required();
    cmd_reproduce_->add_option("--seed", reproduce.seed, "base seed");
    cmd_reproduce_->add_option("--particles", reproduce.particles, "particles per run");
    cmd_reproduce_->add_option("--r", reproduce.r_in_d, "container radius in diameters");
    cmd_reproduce_->add_option("--cycles", reproduce.cycles, "agitation cycles");
    cmd_reproduce_->add_option("--trials", reproduce.trials, "trials per cell");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_pack_->parsed()) return cmd_pack(common, pack);
        if (cmd_analyze_->parsed()) return cmd_analyze(common, analyze);
        if (cmd_distance_->parsed()) return cmd_distance(common, dist);
        if (cmd_sweep_->parsed()) return cmd_sweep(common, sweep);
        if (cmd_battery_->parsed()) return cmd_battery(common, battery);
        if (cmd_reproduce_->parsed()) return cmd_reproduce(common, reproduce);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return packlab::cli::EXIT_CONFIG;
    } catch (const std::exception& e) {
        std::cerr << "simulation failure: " << e.what() << "\n";
        return packlab::cli::EXIT_SIMULATION;
    }
    return packlab::cli::EXIT_CONFIG;
}
