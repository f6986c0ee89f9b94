#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "mmsched/channel.hpp"
#include "mmsched/random.hpp"

namespace mmsched::policies {

enum class Route { mm, rf };

/// What a policy may observe when routing: queue lengths as they evolve
/// within the slot and the link history up to and including the current slot.
struct SystemView {
    std::int64_t t = 0;
    std::size_t q_s = 0;
    std::size_t q_mm = 0;
    std::size_t q_rf = 0;
    std::span<const std::uint8_t> link_history;
};

struct SlotOutcome {
    std::int64_t t = 0;
    std::size_t alpha = 0;
    std::size_t beta = 0;
};

/// Common decision interface. The engine calls `on_slot_start` once per slot,
/// then `route_next` for the head of the scheduler queue until it returns
/// nullopt or the queue empties, then `on_slot_end` after service.
class Policy {
public:
    virtual ~Policy() = default;

    virtual void on_slot_start(const SystemView&) {}
    [[nodiscard]] virtual std::optional<Route> route_next(const SystemView& view, Rng& rng) = 0;
    virtual void on_slot_end(const SlotOutcome&) {}

    [[nodiscard]] virtual std::string name() const = 0;
};

/// pi(Q) = 1 iff Q < h.
[[nodiscard]] constexpr bool threshold_decide(std::size_t q_mm, std::size_t h) noexcept { return q_mm < h; }

[[nodiscard]] bool probabilistic_decide(double p, Rng& rng);

/// One step of the online threshold rule: psi = delta(beta) / delta(alpha);
/// h is decremented when psi >= ratio_bound. A zero throughput increment is
/// treated as psi = +inf. The result is clamped to [h_min, k_max].
[[nodiscard]] std::size_t online_update(double alpha_now, double beta_now, double alpha_prev, double beta_prev,
                                        std::size_t h, double ratio_bound, std::size_t h_min, std::size_t k_max);

struct BackpressureChoice {
    Route route = Route::rf;
    double w_mm = 0.0;
    double w_rf = 0.0;

    [[nodiscard]] double best_weight() const noexcept { return route == Route::mm ? w_mm : w_rf; }
};

/// w_a = (Q_s - Q_a) * E[R_a]; ties go to RF.
[[nodiscard]] BackpressureChoice backpressure_select(std::size_t q_s, std::size_t q_mm, std::size_t q_rf,
                                                     double expected_mm, double expected_rf);

class ThresholdPolicy final : public Policy {
public:
    explicit ThresholdPolicy(std::size_t h) : h_(h) {}

    std::optional<Route> route_next(const SystemView& view, Rng& rng) override;
    [[nodiscard]] std::string name() const override { return "threshold"; }
    [[nodiscard]] std::size_t threshold() const noexcept { return h_; }

private:
    std::size_t h_;
};

class ProbabilisticPolicy final : public Policy {
public:
    explicit ProbabilisticPolicy(double p);

    std::optional<Route> route_next(const SystemView& view, Rng& rng) override;
    [[nodiscard]] std::string name() const override { return "probabilistic"; }

private:
    double p_;
};

struct OnlineThresholdParams {
    std::size_t k_max = 10000;
    std::size_t h_min = 0;
    double r = 1.0;
    double c = 1.0;
    double w = 0.0;
    std::int64_t epoch = 100;
    std::int64_t reset_period = 2000;
    bool reset_enabled = true;

    [[nodiscard]] double ratio_bound() const { return (r + c) / (w + c); }
    void validate() const;
};

/// Threshold policy whose threshold is revised once per epoch from windowed
/// mmWave throughput and admission rates, and optionally reset to K.
class OnlineThresholdPolicy final : public Policy {
public:
    explicit OnlineThresholdPolicy(OnlineThresholdParams params);

    std::optional<Route> route_next(const SystemView& view, Rng& rng) override;
    void on_slot_end(const SlotOutcome& outcome) override;
    [[nodiscard]] std::string name() const override { return "online"; }
    [[nodiscard]] std::size_t threshold() const noexcept { return h_; }

private:
    OnlineThresholdParams params_;
    std::size_t h_;
    std::size_t window_alpha_ = 0;
    std::size_t window_beta_ = 0;
    std::int64_t window_slots_ = 0;
    std::optional<double> prev_alpha_;
    std::optional<double> prev_beta_;
};

struct BackpressureParams {
    std::int64_t tau_mm = 0;
    std::int64_t tau_rf = 0;
    channel::MarkovLinkModel mm_link;  ///< rate_on is the mmWave service rate
    double rf_rate = 1.0;
};

/// Max-weight link selection with delayed CSI. Each slot one interface is
/// selected and up to ceil(rate) packets are moved to it; nothing moves when
/// the best weight is not positive.
class BackpressurePolicy final : public Policy {
public:
    explicit BackpressurePolicy(BackpressureParams params);

    void on_slot_start(const SystemView& view) override;
    std::optional<Route> route_next(const SystemView& view, Rng& rng) override;
    [[nodiscard]] std::string name() const override { return "backpressure"; }
    [[nodiscard]] const BackpressureChoice& last_choice() const noexcept { return choice_; }

    /// E[R_mm(t) | L(t - tau_mm)], or the stationary mean before any observation.
    [[nodiscard]] double expected_mm(const SystemView& view) const;

private:
    BackpressureParams params_;
    BackpressureChoice choice_;
    std::size_t budget_ = 0;
};

enum class PolicyKind { threshold, online, probabilistic, backpressure };

[[nodiscard]] PolicyKind parse_policy_kind(const std::string& s);
[[nodiscard]] std::string to_string(PolicyKind kind);

struct PolicyConfig {
    PolicyKind kind = PolicyKind::threshold;
    std::size_t h = 10;
    double p = 1.0;
    OnlineThresholdParams online;
    std::int64_t tau_mm = 0;
    std::int64_t tau_rf = 0;
};

/// Builds a fresh policy for one run. Backpressure uses `mm_link` for its
/// conditional rate estimate.
[[nodiscard]] std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const channel::MarkovLinkModel& mm_link,
                                                  double rf_rate);

}  // namespace mmsched::policies
