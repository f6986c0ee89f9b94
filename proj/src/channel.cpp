#include "mmsched/channel.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "mmsched/csv.hpp"
#include "mmsched/error.hpp"

namespace mmsched::channel {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::int64_t deterministic_length(double mean) {
    return std::max<std::int64_t>(1, std::llround(mean));
}

}  // namespace

double DurationLaw::log_location() const {
    return std::log(mean_slots) - 0.5 * shape * shape;
}

std::int64_t DurationLaw::sample(Rng& rng) const {
    if (shape == 0.0) return deterministic_length(mean_slots);
    std::normal_distribution<double> z(0.0, 1.0);
    const double x = std::exp(log_location() + shape * z(rng));
    return std::max<std::int64_t>(1, std::llround(x));
}

double DurationLaw::rounded_cdf(std::int64_t k) const {
    if (k < 1) return 0.0;
    if (shape == 0.0) return k >= deterministic_length(mean_slots) ? 1.0 : 0.0;
    return normal_cdf((std::log(static_cast<double>(k) + 0.5) - log_location()) / shape);
}

void OnOffParams::validate() const {
    if (!(on.mean_slots > 0.0)) throw ParameterError("mean ON duration must be positive");
    if (!(off.mean_slots > 0.0)) throw ParameterError("mean OFF duration must be positive");
    if (on.shape < 0.0 || off.shape < 0.0) throw ParameterError("log-normal shape must be non-negative");
    if (off_probability < 0.0 || off_probability > 1.0) {
        throw ParameterError("off_probability must lie in [0, 1]");
    }
}

LinkTrace::LinkTrace(std::vector<std::uint8_t> slots, TraceOrigin origin, std::optional<double> cutoff_db,
                     std::int64_t first_slot)
    : slots_(std::move(slots)), origin_(origin), cutoff_db_(cutoff_db), first_slot_(first_slot) {
    if (slots_.empty()) throw InputError("link trace is empty");
    for (auto s : slots_) {
        if (s > 1) throw InputError("link state must be 0 or 1");
    }
}

double LinkTrace::on_fraction() const {
    std::size_t on = 0;
    for (auto s : slots_) on += s;
    return static_cast<double>(on) / static_cast<double>(slots_.size());
}

SignalTrace::SignalTrace(std::vector<SignalSample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        if (samples_[i].slot <= samples_[i - 1].slot) {
            throw InputError("signal trace slots must be strictly increasing (sample " + std::to_string(i) + ")");
        }
    }
}

void MarkovLinkModel::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_stay_on) || !prob(p_stay_off)) throw ParameterError("transition probabilities must lie in [0, 1]");
    if (!(rate_off >= 0.0) || rate_on < rate_off) throw ParameterError("rates must satisfy rate_on >= rate_off >= 0");
}

double MarkovLinkModel::stationary_on() const {
    const double leave_on = 1.0 - p_stay_on;
    const double leave_off = 1.0 - p_stay_off;
    if (leave_on + leave_off == 0.0) return 1.0;
    return leave_off / (leave_on + leave_off);
}

double MarkovLinkModel::on_probability_after(bool observed_on, std::int64_t tau) const {
    if (tau < 0) throw ParameterError("CSI delay must be non-negative");
    const double start = observed_on ? 1.0 : 0.0;
    const double leave_on = 1.0 - p_stay_on;
    const double leave_off = 1.0 - p_stay_off;
    if (tau == 0 || leave_on + leave_off == 0.0) return start;
    // Two-state chain: the deviation from stationarity decays by the second
    // eigenvalue p_stay_on + p_stay_off - 1 each slot.
    const double pi_on = leave_off / (leave_on + leave_off);
    const double decay = 1.0 - leave_on - leave_off;
    return pi_on + (start - pi_on) * std::pow(decay, static_cast<double>(tau));
}

LinkTrace generate_onoff(const OnOffParams& params, std::int64_t horizon, std::uint64_t seed) {
    params.validate();
    if (horizon < 1) throw ParameterError("horizon must be at least one slot");
    Rng rng = make_rng(seed, Stream::link);
    std::vector<std::uint8_t> slots;
    slots.reserve(static_cast<std::size_t>(horizon));
    const auto n = static_cast<std::size_t>(horizon);
    while (slots.size() < n) {
        const auto on = params.on.sample(rng);
        slots.insert(slots.end(), std::min<std::size_t>(static_cast<std::size_t>(on), n - slots.size()), 1);
        if (slots.size() >= n) break;
        if (!bernoulli(rng, params.off_probability)) continue;
        const auto off = params.off.sample(rng);
        slots.insert(slots.end(), std::min<std::size_t>(static_cast<std::size_t>(off), n - slots.size()), 0);
    }
    return LinkTrace(std::move(slots), TraceOrigin::generated);
}

LinkTrace trace_to_link(const SignalTrace& trace, double cutoff_db) {
    if (trace.empty()) throw InputError("signal trace is empty");
    const auto& s = trace.samples();
    const std::int64_t first = s.front().slot;
    std::vector<std::uint8_t> slots(static_cast<std::size_t>(s.back().slot - first + 1));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::uint8_t state = s[i].strength_db >= cutoff_db ? 1 : 0;
        const auto begin = static_cast<std::size_t>(s[i].slot - first);
        const auto end = i + 1 < s.size() ? static_cast<std::size_t>(s[i + 1].slot - first) : slots.size();
        std::fill(slots.begin() + static_cast<std::ptrdiff_t>(begin), slots.begin() + static_cast<std::ptrdiff_t>(end),
                  state);
    }
    return LinkTrace(std::move(slots), TraceOrigin::trace_derived, cutoff_db, first);
}

MarkovLinkModel fit_markov(const LinkTrace& link, double rate_on) {
    const auto& l = link.slots();
    if (l.size() < 2) throw ParameterError("fitting a Markov link needs at least two slots");
    std::size_t on_total = 0, on_stay = 0, off_total = 0, off_stay = 0;
    for (std::size_t i = 0; i + 1 < l.size(); ++i) {
        if (l[i]) {
            ++on_total;
            on_stay += l[i + 1];
        } else {
            ++off_total;
            off_stay += 1 - l[i + 1];
        }
    }
    if (on_total == 0) throw InputError("link trace has no ON slot with a successor; p_stay_on is undefined");
    MarkovLinkModel m;
    m.p_stay_on = static_cast<double>(on_stay) / static_cast<double>(on_total);
    // Never observed OFF: any value gives P(on) = 1 here, pick the fast-exit one.
    m.p_stay_off = off_total == 0 ? 0.0 : static_cast<double>(off_stay) / static_cast<double>(off_total);
    m.rate_on = rate_on;
    m.rate_off = 0.0;
    m.validate();
    return m;
}

double expected_rate_delayed(const MarkovLinkModel& model, bool observed_on, std::int64_t tau) {
    const double p_on = model.on_probability_after(observed_on, tau);
    return model.rate_on * p_on + model.rate_off * (1.0 - p_on);
}

RunLengthStats run_lengths(const LinkTrace& link) {
    RunLengthStats out;
    const auto& l = link.slots();
    std::int64_t run = 1;
    for (std::size_t i = 1; i <= l.size(); ++i) {
        if (i < l.size() && l[i] == l[i - 1]) {
            ++run;
            continue;
        }
        (l[i - 1] ? out.on_runs : out.off_runs).push_back(run);
        run = 1;
    }
    return out;
}

SignalTrace read_signal_csv(std::istream& in) {
    csv::expect_header(in, "slot,strength_db");
    std::vector<SignalSample> samples;
    std::int64_t last = 0;
    csv::for_each_row(in, 2, [&](const std::vector<std::string>& f, std::size_t row) {
        const auto slot = csv::parse_int(f[0], row);
        if (!samples.empty() && slot <= last) {
            throw InputError("row " + std::to_string(row) + ": slot indices must be strictly increasing");
        }
        samples.push_back({slot, csv::parse_double(f[1], row)});
        last = slot;
    });
    if (samples.empty()) throw InputError("signal trace is empty");
    return SignalTrace(std::move(samples));
}

SignalTrace read_signal_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open signal trace '" + path + "'");
    return read_signal_csv(in);
}

void write_link_csv(std::ostream& out, const LinkTrace& link) {
    out << "slot,state\n";
    for (std::size_t i = 0; i < link.size(); ++i) {
        out << link.first_slot() + static_cast<std::int64_t>(i) << ',' << int(link.slots()[i]) << '\n';
    }
}

LinkTrace read_link_csv(std::istream& in) {
    csv::expect_header(in, "slot,state");
    std::vector<std::uint8_t> slots;
    std::int64_t first = 0;
    csv::for_each_row(in, 2, [&](const std::vector<std::string>& f, std::size_t row) {
        const auto slot = csv::parse_int(f[0], row);
        const auto state = csv::parse_int(f[1], row);
        if (slots.empty()) {
            first = slot;
        } else if (slot != first + static_cast<std::int64_t>(slots.size())) {
            throw InputError("row " + std::to_string(row) + ": link trace slots must be consecutive");
        }
        if (state != 0 && state != 1) throw InputError("row " + std::to_string(row) + ": state must be 0 or 1");
        slots.push_back(static_cast<std::uint8_t>(state));
    });
    if (slots.empty()) throw InputError("link trace is empty");
    return LinkTrace(std::move(slots), TraceOrigin::trace_derived, std::nullopt, first);
}

LinkTrace read_link_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open link trace '" + path + "'");
    return read_link_csv(in);
}

}  // namespace mmsched::channel
