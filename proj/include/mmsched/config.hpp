#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmsched/analysis.hpp"
#include "mmsched/beamform.hpp"
#include "mmsched/channel.hpp"
#include "mmsched/engine.hpp"
#include "mmsched/error.hpp"

namespace mmsched::cli {

/// Sectioned `key = value` text. `#` and `;` start comments; keys before the
/// first `[section]` belong to the top-level section "".
class IniDocument {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    [[nodiscard]] static IniDocument parse(std::istream& in, std::string source);

    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    /// Looks a key up and marks it as consumed.
    [[nodiscard]] std::optional<Entry> take(const std::string& section, const std::string& key) const;
    [[nodiscard]] bool has_section(const std::string& section) const { return sections_.count(section) != 0; }
    /// Line of the section header (0 for the top level or a missing section).
    [[nodiscard]] std::size_t section_line(const std::string& section) const;
    /// Throws for the first key or section that was never consumed.
    void reject_unused(const std::set<std::string>& known_sections) const;

    [[nodiscard]] ConfigError error(std::size_t line, const std::string& message) const;

private:
    std::string source_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
    std::map<std::string, std::size_t> section_lines_;
    mutable std::set<std::pair<std::string, std::string>> used_;
};

/// Where the mmWave link comes from: a generated ON/OFF process, a link CSV
/// or a signal-strength CSV cut at `cutoff_db`.
struct ChannelConfig {
    channel::OnOffParams onoff;
    std::optional<std::filesystem::path> link_csv;
    std::optional<std::filesystem::path> signal_csv;
    double cutoff_db = 0.0;
};

struct AnalysisConfig {
    analysis::ChainModel model;
    std::optional<std::size_t> h_max;  ///< defaults to q_max
    channel::DurationLaw on{20.0, 0.5};
    channel::DurationLaw off{3.5, 0.5};
    double quantile = 0.999;
};

struct SweepConfig {
    std::string param;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;  ///< empty: the run seed only
    std::size_t line = 0;              ///< of the `param` key
};

struct RunConfig {
    std::string source;
    engine::SimConfig sim;
    ChannelConfig channel;
    AnalysisConfig analysis;
    beamform::Scene scene;
    beamform::BeamformConfig beamform;
    std::optional<SweepConfig> sweep;
    std::filesystem::path out_dir = "out";
    bool timeseries = false;
};

/// Sweepable parameters, as accepted by apply_sweep_param.
[[nodiscard]] const std::vector<std::string>& sweep_params();

/// Sets one sweep parameter on a configuration: h, p (policy), c, r (reward,
/// mirrored into the online policy), tau (both CSI delays) or lambda (the
/// offered load, realized through the batch probability).
void apply_sweep_param(RunConfig& config, const std::string& name, double value);

/// Parses and validates a configuration. Relative paths resolve against
/// `base_dir`. Every error is a ConfigError prefixed with `source:line`.
[[nodiscard]] RunConfig parse_config(std::istream& in, const std::string& source,
                                     const std::filesystem::path& base_dir);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// "a, b, c" or an inclusive range "start:stop[:step]".
[[nodiscard]] std::vector<double> parse_number_list(const std::string& text);

}  // namespace mmsched::cli
