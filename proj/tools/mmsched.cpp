#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmsched/cli.hpp"
#include "mmsched/error.hpp"

using namespace mmsched;

int main(int argc, char** argv) {
    CLI::App app{"RF/mmWave scheduling simulator and solver"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t jobs = 0;
    bool timeseries = false;
    std::string input;
    double cutoff_db = 0.0;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
        if (needs_config) c->required();
        sub->add_option("--seed", seed, "override the configured seed");
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* simulate = app.add_subcommand("simulate", "one engine run: report.jsonl and optional series.csv");
    common(simulate, true);
    simulate->add_flag("--timeseries", timeseries, "also write the per-slot series");

    auto* sweep = app.add_subcommand("sweep", "parameter sweep from the [sweep] section: sweep.csv");
    common(sweep, true);
    sweep->add_option("--jobs", jobs, "worker threads (default: logical cores)");

    auto* solve = app.add_subcommand("solve", "threshold curve and h*: curve.csv, solve.json");
    common(solve, true);

    auto* beam = app.add_subcommand("beamform", "RF-assisted beam search on the configured scene");
    common(beam, true);

    auto* import = app.add_subcommand("trace-import", "signal-strength CSV to link CSV");
    import->add_option("input", input, "signal trace CSV (slot,strength_db)")->required()->check(CLI::ExistingFile);
    import->add_option("--cutoff-db", cutoff_db, "reception cutoff in dB")->required();
    import->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (import->parsed()) {
            cli::cmd_trace_import(input, cutoff_db, out_dir.empty() ? "out" : out_dir, std::cout);
            return 0;
        }
        const auto config = cli::load_config(config_path);
        cli::Options opt;
        for (auto* sub : {simulate, sweep, solve, beam})
            if (sub->parsed() && sub->count("--seed")) opt.seed = seed;
        if (!out_dir.empty()) opt.out_dir = out_dir;
        opt.jobs = jobs;
        opt.timeseries = timeseries;
        if (simulate->parsed()) cli::cmd_simulate(config, opt, std::cout);
        if (sweep->parsed()) cli::cmd_sweep(config, opt, std::cout);
        if (solve->parsed()) cli::cmd_solve(config, opt, std::cout);
        if (beam->parsed()) cli::cmd_beamform(config, opt, std::cout);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
