#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmsched/channel.hpp"
#include "mmsched/policies.hpp"
#include "mmsched/random.hpp"

namespace mmsched::engine {

struct Packet {
    std::uint64_t id = 0;
    std::int64_t arrival_slot = 0;
    std::optional<std::int64_t> mm_entry_slot;
    std::int64_t rf_entry_slot = 0;
    bool reneged = false;
};

/// Batch arrivals: with probability `batch_prob` a batch of
/// round(max(0, N(batch_mean, batch_std))) packets arrives in a slot.
struct ArrivalConfig {
    double batch_prob = 0.9;
    double batch_mean = 20.0;
    double batch_std = 1.0;

    [[nodiscard]] double rate() const noexcept { return batch_prob * batch_mean; }
    void validate() const;
};

enum class RenegeMode {
    none,      ///< packets never leave the mmWave queue early
    timeout,   ///< head leaves once its wait reaches a fixed T_out
    adaptive,  ///< as timeout, with T_out(t) = running mean RF sojourn
    rate,      ///< one head renege per slot w.p. sigma * Q_mm, forced at T_out
};

/// How the head-of-line wait D(t) is measured.
enum class HolClock {
    entry,  ///< slots since the head entered the mmWave queue
    head,   ///< slots since the head reached the front of the queue
};

[[nodiscard]] RenegeMode parse_renege_mode(const std::string& s);
[[nodiscard]] HolClock parse_hol_clock(const std::string& s);
[[nodiscard]] std::string to_string(RenegeMode mode);
[[nodiscard]] std::string to_string(HolClock clock);

struct ServiceConfig {
    double mm_rate = 10.0;  ///< packets per ON slot; fractional rates carry credit
    double rf_rate = 1.0;
    /// Each ON slot the mmWave server works with this probability.
    double mm_service_prob = 1.0;
    std::size_t renege_link_rate = 1000;
    RenegeMode renege = RenegeMode::timeout;
    HolClock clock = HolClock::entry;
    double timeout_slots = 10.0;
    /// T_out before the first RF departure in adaptive mode.
    double initial_timeout_slots = 10.0;
    double sigma = 0.0;

    void validate() const;
};

struct BufferConfig {
    std::size_t scheduler = 10000;
    std::size_t mm = 10000;
    std::size_t rf = 10000;
};

struct RewardParams {
    double r = 1.0;
    double c = 1.0;
    double w = 0.0;
};

/// Queues of the diamond network. The destination queue is identically zero
/// and not stored.
struct SystemState {
    std::deque<Packet> q_s;
    std::deque<Packet> q_mm;
    std::deque<Packet> q_rf;
    std::int64_t t = 0;
    /// First slot at whose start the current mmWave head is at the front.
    std::int64_t head_since = 0;

    /// Head-of-line wait at the current slot, 0 when the queue is empty.
    [[nodiscard]] std::int64_t hol_wait(HolClock clock) const;
};

struct SlotMetrics {
    std::size_t arrivals = 0;
    std::size_t alpha = 0;
    std::size_t beta = 0;
    std::size_t gamma = 0;
    std::size_t rf_served = 0;
    std::size_t dropped = 0;
    bool wasted = false;
    double timeout = 0.0;
};

struct SeriesRow {
    std::int64_t slot;
    std::size_t q_s, q_mm, q_rf;
    int link;
    std::size_t alpha, beta, gamma;
    double timeout;
};

/// Running mean of RF sojourn times, used as the adaptive T_out.
class AdaptiveTimeout {
public:
    explicit AdaptiveTimeout(double initial) : initial_(initial) {}

    void record(std::int64_t sojourn) {
        sum_ += static_cast<double>(sojourn);
        ++count_;
    }
    [[nodiscard]] double value() const { return count_ == 0 ? initial_ : sum_ / static_cast<double>(count_); }
    [[nodiscard]] std::size_t samples() const noexcept { return count_; }

private:
    double initial_;
    double sum_ = 0.0;
    std::size_t count_ = 0;
};

/// Slot-start occupancy counts of (Q_mm, D, L), for comparison with the
/// analytical chain. States beyond the configured bounds are counted apart.
struct Occupancy {
    std::size_t q_max = 0;
    std::size_t d_max = 0;
    std::vector<std::uint64_t> on;   ///< index q * (d_max + 1) + d
    std::vector<std::uint64_t> off;
    std::uint64_t out_of_range = 0;
    std::uint64_t total = 0;
};

struct SimConfig {
    ArrivalConfig arrivals;
    ServiceConfig service;
    BufferConfig buffers;
    RewardParams reward;
    policies::PolicyConfig policy;
    std::int64_t horizon = 100000;
    std::uint64_t seed = 1;
    bool record_series = false;
    std::optional<std::pair<std::size_t, std::size_t>> occupancy_bounds;  ///< (q_max, d_max)

    void validate() const;
};

struct SimulationReport {
    std::string policy;
    std::uint64_t seed = 0;
    std::int64_t horizon = 0;
    double alpha = 0.0;   ///< mmWave throughput, packets/slot
    double beta = 0.0;    ///< admissions to the mmWave queue, packets/slot
    double gamma = 0.0;   ///< reneging rate, packets/slot
    double rf_throughput = 0.0;
    double throughput = 0.0;  ///< total deliveries, packets/slot
    double reward = 0.0;      ///< (r * sum alpha - c * sum gamma) / T
    double avg_wait_mm = 0.0;
    double avg_wait_rf = 0.0;
    double avg_delay = 0.0;
    double link_wastage = 0.0;
    double final_timeout = 0.0;
    std::uint64_t arrivals = 0;
    std::uint64_t dropped = 0;
    std::uint64_t backlog = 0;
    std::vector<SeriesRow> series;
    std::optional<Occupancy> occupancy;
};

/// One simulation in progress. Owns the state, the policy and the random
/// streams; strictly single-threaded.
class Simulator {
public:
    Simulator(const SimConfig& config, std::unique_ptr<policies::Policy> policy, std::uint64_t seed);

    /// Advances one slot with link availability `link_on`. `link_history`
    /// covers slots 0..t and is what the policy may observe.
    SlotMetrics step(bool link_on, std::span<const std::uint8_t> link_history);

    [[nodiscard]] const SystemState& state() const noexcept { return state_; }
    [[nodiscard]] SystemState& mutable_state() noexcept { return state_; }
    [[nodiscard]] double current_timeout() const;
    [[nodiscard]] const AdaptiveTimeout& adaptive_timeout() const noexcept { return adaptive_; }
    [[nodiscard]] std::uint64_t next_packet_id() const noexcept { return next_id_; }

    /// Inject packets directly into a queue (tests, warm starts).
    void push_mm(std::int64_t entry_slot);
    void push_rf(std::int64_t entry_slot);

    struct Totals {
        std::uint64_t arrivals = 0, alpha = 0, beta = 0, gamma = 0, rf_served = 0, dropped = 0, wasted = 0;
        double mm_wait_sum = 0.0;
        std::uint64_t mm_leavers = 0;
        double rf_wait_sum = 0.0;
        double delay_sum = 0.0;
        double timeout_sum = 0.0;
    };
    [[nodiscard]] const Totals& totals() const noexcept { return totals_; }

private:
    void admit_mm(Packet p);
    void admit_rf(Packet p, SlotMetrics& m);
    void pop_mm_head();
    void renege(SlotMetrics& m);
    std::size_t capacity(double rate, double& credit) const;

    SimConfig config_;
    std::unique_ptr<policies::Policy> policy_;
    SystemState state_;
    Rng arrival_rng_;
    Rng policy_rng_;
    Rng service_rng_;
    AdaptiveTimeout adaptive_;
    double mm_credit_ = 0.0;
    double rf_credit_ = 0.0;
    std::uint64_t next_id_ = 0;
    Totals totals_;
};

/// Runs `config.horizon` slots against `link` (cycled if shorter). The
/// link's fitted Markov model feeds policies that need one.
[[nodiscard]] SimulationReport run(const SimConfig& config, const channel::LinkTrace& link);

void write_report_json(std::ostream& out, const SimulationReport& report);
void write_series_csv(std::ostream& out, const SimulationReport& report);

}  // namespace mmsched::engine
