#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmsched/random.hpp"

namespace mmsched::channel {

/// Run-length distribution of one link state: log-normal with the given
/// distribution mean (in slots) and log-space shape. A shape of 0 gives a
/// deterministic run of round(mean) slots.
struct DurationLaw {
    double mean_slots = 1.0;
    double shape = 0.5;

    /// Draws one run length, rounded to the nearest slot and at least 1.
    [[nodiscard]] std::int64_t sample(Rng& rng) const;

    /// Log-space location so that E[X] == mean_slots.
    [[nodiscard]] double log_location() const;
    /// P(rounded run length <= k), k >= 1.
    [[nodiscard]] double rounded_cdf(std::int64_t k) const;
};

/// Alternating ON/OFF renewal process of the mmWave link.
struct OnOffParams {
    DurationLaw on{20.0, 0.5};
    DurationLaw off{3.5, 0.5};
    /// Probability that an ON run is followed by an OFF run. 0 degenerates to
    /// an always-available link.
    double off_probability = 1.0;

    void validate() const;
};

enum class TraceOrigin { generated, trace_derived };

/// Per-slot binary availability L(t), starting at `first_slot`.
class LinkTrace {
public:
    LinkTrace(std::vector<std::uint8_t> slots, TraceOrigin origin,
              std::optional<double> cutoff_db = std::nullopt, std::int64_t first_slot = 0);

    [[nodiscard]] const std::vector<std::uint8_t>& slots() const noexcept { return slots_; }
    [[nodiscard]] std::size_t size() const noexcept { return slots_.size(); }
    [[nodiscard]] bool on(std::size_t i) const { return slots_.at(i) != 0; }
    [[nodiscard]] TraceOrigin origin() const noexcept { return origin_; }
    [[nodiscard]] std::optional<double> cutoff_db() const noexcept { return cutoff_db_; }
    [[nodiscard]] std::int64_t first_slot() const noexcept { return first_slot_; }
    [[nodiscard]] double on_fraction() const;

    bool operator==(const LinkTrace&) const = default;

private:
    std::vector<std::uint8_t> slots_;
    TraceOrigin origin_;
    std::optional<double> cutoff_db_;
    std::int64_t first_slot_;
};

struct SignalSample {
    std::int64_t slot;
    double strength_db;
};

/// Received signal strength samples with strictly increasing slot indices.
class SignalTrace {
public:
    explicit SignalTrace(std::vector<SignalSample> samples);

    [[nodiscard]] const std::vector<SignalSample>& samples() const noexcept { return samples_; }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }

private:
    std::vector<SignalSample> samples_;
};

/// Two-state Markov reduction of a link trace.
struct MarkovLinkModel {
    double p_stay_on = 1.0;
    double p_stay_off = 0.0;
    double rate_on = 1.0;
    double rate_off = 0.0;

    void validate() const;
    /// Long-run fraction of ON slots. A chain with both states absorbing has
    /// no unique value; 1 is returned when ON is absorbing.
    [[nodiscard]] double stationary_on() const;
    /// P(L(t + tau) = 1 | L(t) = observed).
    [[nodiscard]] double on_probability_after(bool observed_on, std::int64_t tau) const;
};

struct RunLengthStats {
    std::vector<std::int64_t> on_runs;
    std::vector<std::int64_t> off_runs;
};

[[nodiscard]] LinkTrace generate_onoff(const OnOffParams& params, std::int64_t horizon, std::uint64_t seed);

/// L(t) = 1 iff strength(t) >= cutoff; slots between samples hold the last state.
[[nodiscard]] LinkTrace trace_to_link(const SignalTrace& trace, double cutoff_db);

/// Maximum-likelihood transition probabilities from consecutive slot pairs.
[[nodiscard]] MarkovLinkModel fit_markov(const LinkTrace& link, double rate_on);

/// E[R(t) | L(t - tau) = observed] for the fitted chain.
[[nodiscard]] double expected_rate_delayed(const MarkovLinkModel& model, bool observed_on, std::int64_t tau);

/// Maximal runs of equal states. The final run is included as-is even when
/// it was cut by the end of the trace.
[[nodiscard]] RunLengthStats run_lengths(const LinkTrace& link);

// CSV I/O: `slot,strength_db` for signal traces, `slot,state` for link traces.
[[nodiscard]] SignalTrace read_signal_csv(std::istream& in);
[[nodiscard]] SignalTrace read_signal_csv(const std::string& path);
void write_link_csv(std::ostream& out, const LinkTrace& link);
[[nodiscard]] LinkTrace read_link_csv(std::istream& in);
[[nodiscard]] LinkTrace read_link_csv(const std::string& path);

}  // namespace mmsched::channel
