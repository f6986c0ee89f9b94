#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmsched/config.hpp"

namespace mmsched::cli {

/// Command-line overrides shared by every subcommand.
struct Options {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out_dir;
    std::size_t jobs = 0;  ///< 0: hardware concurrency
    bool timeseries = false;
};

/// Files written to a temporary name and renamed into place together on
/// commit. Uncommitted files are removed on destruction, so a failed command
/// leaves nothing behind.
class StagedOutputs {
public:
    explicit StagedOutputs(std::filesystem::path dir);
    ~StagedOutputs();
    StagedOutputs(const StagedOutputs&) = delete;
    StagedOutputs& operator=(const StagedOutputs&) = delete;

    std::ostream& open(const std::string& name);
    /// Flushes, checks and renames every staged file; returns the final paths.
    std::vector<std::filesystem::path> commit();

private:
    struct File {
        std::filesystem::path tmp, final;
        std::ofstream stream;
    };
    std::filesystem::path dir_;
    std::vector<std::unique_ptr<File>> files_;
    bool created_dir_ = false;
    bool committed_ = false;
};

/// The link a configuration runs against, `horizon` slots long when generated.
[[nodiscard]] channel::LinkTrace make_link(const RunConfig& config, std::uint64_t seed);

/// One engine run of the configuration under `seed` (link and run streams).
[[nodiscard]] engine::SimulationReport simulate_once(const RunConfig& config, std::uint64_t seed);

struct SweepRow {
    std::string param;
    double value = 0.0;
    std::uint64_t seed = 0;
    double alpha = 0.0, gamma = 0.0, reward = 0.0, avg_wait_mm = 0.0, avg_wait_rf = 0.0, wastage = 0.0;
    double throughput = 0.0;  ///< not written to the CSV
};

/// Cross product values x seeds on `jobs` worker threads, returned in
/// ascending (value, seed) order regardless of scheduling.
[[nodiscard]] std::vector<SweepRow> run_sweep(const RunConfig& config, const SweepConfig& sweep, std::size_t jobs);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
[[nodiscard]] std::vector<SweepRow> read_sweep_csv(std::istream& in);

void write_curve_csv(std::ostream& out, const analysis::ThresholdCurve& curve);
[[nodiscard]] std::vector<analysis::CurvePoint> read_curve_csv(std::istream& in);
[[nodiscard]] beamform::AngularSpectrum read_spectrum_csv(std::istream& in);

/// Formats a double so that strtod recovers it exactly; nan and inf spelled out.
[[nodiscard]] std::string format_double(double v);

// Subcommands. Each validates, computes, then commits all of its files at
// once; `log` receives a short human-readable summary.
void cmd_simulate(const RunConfig& config, const Options& opt, std::ostream& log);
void cmd_sweep(const RunConfig& config, const Options& opt, std::ostream& log);
void cmd_solve(const RunConfig& config, const Options& opt, std::ostream& log);
void cmd_beamform(const RunConfig& config, const Options& opt, std::ostream& log);
void cmd_trace_import(const std::filesystem::path& input, double cutoff_db, const std::filesystem::path& out_dir,
                      std::ostream& log);

}  // namespace mmsched::cli
