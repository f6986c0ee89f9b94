#include "mmsched/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "mmsched/csv.hpp"
#include "mmsched/error.hpp"

namespace mmsched::cli {

namespace fs = std::filesystem;

StagedOutputs::StagedOutputs(fs::path dir) : dir_(std::move(dir)) {}

StagedOutputs::~StagedOutputs() {
    if (committed_) return;
    std::error_code ec;
    for (auto& f : files_) {
        f->stream.close();
        fs::remove(f->tmp, ec);
    }
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

std::ostream& StagedOutputs::open(const std::string& name) {
    if (!fs::exists(dir_)) {
        std::error_code ec;
        if (!fs::create_directories(dir_, ec)) throw Error("cannot create output directory " + dir_.string());
        created_dir_ = true;
    }
    auto f = std::make_unique<File>();
    f->final = dir_ / name;
    f->tmp = dir_ / ("." + name + ".tmp." + std::to_string(::getpid()));
    f->stream.open(f->tmp, std::ios::binary | std::ios::trunc);
    if (!f->stream) throw Error("cannot write " + f->tmp.string());
    files_.push_back(std::move(f));
    return files_.back()->stream;
}

std::vector<fs::path> StagedOutputs::commit() {
    for (auto& f : files_) {
        f->stream.flush();
        if (!f->stream) throw Error("write failed: " + f->final.string());
        f->stream.close();
    }
    std::vector<fs::path> out;
    for (auto& f : files_) {
        fs::rename(f->tmp, f->final);
        out.push_back(f->final);
    }
    committed_ = true;
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

channel::LinkTrace make_link(const RunConfig& config, std::uint64_t seed) {
    const auto& ch = config.channel;
    if (ch.link_csv) return channel::read_link_csv(ch.link_csv->string());
    if (ch.signal_csv) return channel::trace_to_link(channel::read_signal_csv(ch.signal_csv->string()), ch.cutoff_db);
    return channel::generate_onoff(ch.onoff, config.sim.horizon, seed);
}

engine::SimulationReport simulate_once(const RunConfig& config, std::uint64_t seed) {
    engine::SimConfig sim = config.sim;
    sim.seed = seed;
    return engine::run(sim, make_link(config, seed));
}

std::vector<SweepRow> run_sweep(const RunConfig& config, const SweepConfig& sweep, std::size_t jobs) {
    std::vector<double> values = sweep.values;
    std::vector<std::uint64_t> seeds = sweep.seeds.empty() ? std::vector<std::uint64_t>{config.sim.seed} : sweep.seeds;
    std::stable_sort(values.begin(), values.end());
    std::stable_sort(seeds.begin(), seeds.end());

    struct Point {
        double value;
        std::uint64_t seed;
    };
    std::vector<Point> points;
    for (double v : values)
        for (auto s : seeds) points.push_back({v, s});

    std::vector<SweepRow> rows(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < points.size();) {
            try {
                RunConfig local = config;
                apply_sweep_param(local, sweep.param, points[i].value);
                local.sim.record_series = false;
                const auto r = simulate_once(local, points[i].seed);
                rows[i] = {sweep.param, points[i].value, points[i].seed, r.alpha, r.gamma, r.reward,
                           r.avg_wait_mm, r.avg_wait_rf, r.link_wastage, r.throughput};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min(jobs, std::max<std::size_t>(points.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

namespace {

constexpr const char* kSweepHeader = "param,value,seed,alpha,gamma,reward,avg_wait_mm,avg_wait_rf,wastage";
constexpr const char* kCurveHeader = "h,Ebeta,Ealpha,psi,phi,objective";

void write_json_line(std::ostream& out, const nlohmann::ordered_json& j) { out << j.dump() << '\n'; }

nlohmann::ordered_json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kSweepHeader << '\n';
    for (const auto& r : rows) {
        out << r.param << ',' << format_double(r.value) << ',' << r.seed << ',' << format_double(r.alpha) << ','
            << format_double(r.gamma) << ',' << format_double(r.reward) << ',' << format_double(r.avg_wait_mm) << ','
            << format_double(r.avg_wait_rf) << ',' << format_double(r.wastage) << '\n';
    }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
    csv::expect_header(in, kSweepHeader);
    std::vector<SweepRow> rows;
    csv::for_each_row(in, 9, [&](const std::vector<std::string>& f, std::size_t row) {
        SweepRow r;
        r.param = f[0];
        r.value = csv::parse_double(f[1], row);
        const auto seed = csv::parse_int(f[2], row);
        if (seed < 0) throw InputError("row " + std::to_string(row) + ": negative seed");
        r.seed = static_cast<std::uint64_t>(seed);
        r.alpha = csv::parse_double(f[3], row);
        r.gamma = csv::parse_double(f[4], row);
        r.reward = csv::parse_double(f[5], row);
        r.avg_wait_mm = csv::parse_double(f[6], row);
        r.avg_wait_rf = csv::parse_double(f[7], row);
        r.wastage = csv::parse_double(f[8], row);
        rows.push_back(r);
    });
    return rows;
}

void write_curve_csv(std::ostream& out, const analysis::ThresholdCurve& curve) {
    out << kCurveHeader << '\n';
    for (const auto& p : curve.points) {
        out << p.h << ',' << format_double(p.e_beta) << ',' << format_double(p.e_alpha) << ',' << format_double(p.psi)
            << ',' << format_double(p.phi) << ',' << format_double(p.objective) << '\n';
    }
}

std::vector<analysis::CurvePoint> read_curve_csv(std::istream& in) {
    csv::expect_header(in, kCurveHeader);
    std::vector<analysis::CurvePoint> out;
    csv::for_each_row(in, 6, [&](const std::vector<std::string>& f, std::size_t row) {
        analysis::CurvePoint p;
        const auto h = csv::parse_int(f[0], row);
        if (h < 0) throw InputError("row " + std::to_string(row) + ": negative threshold");
        p.h = static_cast<std::size_t>(h);
        p.e_beta = csv::parse_double(f[1], row);
        p.e_alpha = csv::parse_double(f[2], row);
        p.psi = csv::parse_double(f[3], row);
        p.phi = csv::parse_double(f[4], row);
        p.objective = csv::parse_double(f[5], row);
        out.push_back(p);
    });
    return out;
}

beamform::AngularSpectrum read_spectrum_csv(std::istream& in) {
    csv::expect_header(in, "angle_deg,value");
    beamform::AngularSpectrum s;
    csv::for_each_row(in, 2, [&](const std::vector<std::string>& f, std::size_t row) {
        s.angles_deg.push_back(csv::parse_double(f[0], row));
        s.values.push_back(csv::parse_double(f[1], row));
    });
    return s;
}

void cmd_simulate(const RunConfig& config, const Options& opt, std::ostream& log) {
    RunConfig cfg = config;
    if (opt.seed) cfg.sim.seed = *opt.seed;
    const bool series = opt.timeseries || cfg.timeseries;
    cfg.sim.record_series = series;
    const auto report = simulate_once(cfg, cfg.sim.seed);

    StagedOutputs out(opt.out_dir.value_or(cfg.out_dir));
    engine::write_report_json(out.open("report.jsonl"), report);
    if (series) engine::write_series_csv(out.open("series.csv"), report);
    for (const auto& p : out.commit()) log << "wrote " << p.string() << '\n';
    log << "policy " << report.policy << " alpha " << report.alpha << " gamma " << report.gamma << " reward "
        << report.reward << '\n';
}

void cmd_sweep(const RunConfig& config, const Options& opt, std::ostream& log) {
    if (!config.sweep) throw ConfigError(config.source + ": no [sweep] section");
    RunConfig cfg = config;
    SweepConfig sw = *config.sweep;
    if (opt.seed) {
        cfg.sim.seed = *opt.seed;
        if (sw.seeds.empty()) sw.seeds = {*opt.seed};
    }
    const auto rows = run_sweep(cfg, sw, opt.jobs);
    StagedOutputs out(opt.out_dir.value_or(cfg.out_dir));
    write_sweep_csv(out.open("sweep.csv"), rows);
    for (const auto& p : out.commit()) log << "wrote " << p.string() << '\n';
    log << rows.size() << " runs over " << sw.param << '\n';
}

void cmd_solve(const RunConfig& config, const Options& opt, std::ostream& log) {
    const auto& an = config.analysis;
    const auto& rw = config.sim.reward;
    const analysis::RewardParams reward{rw.r, rw.c, rw.w};
    const auto on = analysis::DurationPmf::from_law(an.on, an.quantile);
    const auto off = analysis::DurationPmf::from_law(an.off, an.quantile);
    const auto curve = analysis::threshold_curve(an.model, an.h_max.value_or(an.model.q_max), on, off, reward);
    const auto best = analysis::optimal_threshold(curve, rw.r, rw.c, rw.w);

    nlohmann::ordered_json j;
    j["h_star"] = best.h;
    j["saturated"] = best.saturated;
    j["argmax"] = analysis::objective_argmax(curve);
    j["objective"] = number_or_null(curve.points[best.h].objective);
    j["r"] = rw.r;
    j["c"] = rw.c;
    j["w"] = rw.w;
    j["truncated_mass"] = on.truncated_mass + off.truncated_mass;

    StagedOutputs out(opt.out_dir.value_or(config.out_dir));
    write_curve_csv(out.open("curve.csv"), curve);
    write_json_line(out.open("solve.json"), j);
    for (const auto& p : out.commit()) log << "wrote " << p.string() << '\n';
    log << "h* = " << best.h << (best.saturated ? " (saturated)" : "") << '\n';
}

void cmd_beamform(const RunConfig& config, const Options& opt, std::ostream& log) {
    const auto r = beamform::run_pipeline(config.scene, config.beamform, opt.seed.value_or(config.sim.seed));
    StagedOutputs out(opt.out_dir.value_or(config.out_dir));
    beamform::write_spectrum_csv(out.open("spectrum.csv"), r.music.spectrum);
    beamform::write_summary_json(out.open("beamform.json"), r);
    for (const auto& p : out.commit()) log << "wrote " << p.string() << '\n';
    if (r.music.ill_conditioned) log << "warning: fewer snapshots than array elements; covariance is rank deficient\n";
    log << "A_RF " << r.music.a_rf << " theta_mm " << r.constrained.best_angle_deg << " probes " << r.constrained.probes
        << " mode " << beamform::to_string(r.mode) << '\n';
}

void cmd_trace_import(const fs::path& input, double cutoff_db, const fs::path& out_dir, std::ostream& log) {
    const auto link = channel::trace_to_link(channel::read_signal_csv(input.string()), cutoff_db);
    const auto runs = channel::run_lengths(link);
    StagedOutputs out(out_dir);
    channel::write_link_csv(out.open("link.csv"), link);
    for (const auto& p : out.commit()) log << "wrote " << p.string() << '\n';
    auto mean = [](const std::vector<std::int64_t>& v) {
        double s = 0.0;
        for (auto x : v) s += static_cast<double>(x);
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    log << link.size() << " slots, ON fraction " << link.on_fraction() << '\n';
    log << "ON runs " << runs.on_runs.size() << " mean " << mean(runs.on_runs) << " slots; OFF runs "
        << runs.off_runs.size() << " mean " << mean(runs.off_runs) << " slots\n";
}

}  // namespace mmsched::cli
