#include "mmsched/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmsched/error.hpp"

namespace mmsched::policies {

bool probabilistic_decide(double p, Rng& rng) { return bernoulli(rng, p); }

std::size_t online_update(double alpha_now, double beta_now, double alpha_prev, double beta_prev, std::size_t h,
                          double ratio_bound, std::size_t h_min, std::size_t k_max) {
    const double d_alpha = alpha_now - alpha_prev;
    const double psi =
        d_alpha == 0.0 ? std::numeric_limits<double>::infinity() : (beta_now - beta_prev) / d_alpha;
    std::size_t next = h;
    if (psi >= ratio_bound && next > 0) --next;
    return std::clamp(next, h_min, k_max);
}

BackpressureChoice backpressure_select(std::size_t q_s, std::size_t q_mm, std::size_t q_rf, double expected_mm,
                                       double expected_rf) {
    BackpressureChoice c;
    c.w_mm = (static_cast<double>(q_s) - static_cast<double>(q_mm)) * expected_mm;
    c.w_rf = (static_cast<double>(q_s) - static_cast<double>(q_rf)) * expected_rf;
    c.route = c.w_mm > c.w_rf ? Route::mm : Route::rf;
    return c;
}

std::optional<Route> ThresholdPolicy::route_next(const SystemView& view, Rng&) {
    return threshold_decide(view.q_mm, h_) ? Route::mm : Route::rf;
}

ProbabilisticPolicy::ProbabilisticPolicy(double p) : p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("admission probability must lie in [0, 1]");
}

std::optional<Route> ProbabilisticPolicy::route_next(const SystemView&, Rng& rng) {
    return probabilistic_decide(p_, rng) ? Route::mm : Route::rf;
}

void OnlineThresholdParams::validate() const {
    if (c < 0.0) throw ParameterError("reneging cost c must be non-negative");
    if (w > r) throw ParameterError("subsidy W must not exceed reward r");
    if (w + c <= 0.0) throw ParameterError("W + c must be positive");
    if (h_min > k_max) throw ParameterError("h_min must not exceed the mmWave buffer size K");
    if (epoch < 1) throw ParameterError("online epoch must be at least one slot");
    if (reset_enabled && reset_period < 1) throw ParameterError("reset period must be at least one slot");
}

OnlineThresholdPolicy::OnlineThresholdPolicy(OnlineThresholdParams params) : params_(params), h_(params.k_max) {
    params_.validate();
}

std::optional<Route> OnlineThresholdPolicy::route_next(const SystemView& view, Rng&) {
    return threshold_decide(view.q_mm, h_) ? Route::mm : Route::rf;
}

void OnlineThresholdPolicy::on_slot_end(const SlotOutcome& outcome) {
    window_alpha_ += outcome.alpha;
    window_beta_ += outcome.beta;
    ++window_slots_;
    if (window_slots_ == params_.epoch) {
        const double alpha = static_cast<double>(window_alpha_) / static_cast<double>(window_slots_);
        const double beta = static_cast<double>(window_beta_) / static_cast<double>(window_slots_);
        if (prev_alpha_) {
            h_ = online_update(alpha, beta, *prev_alpha_, *prev_beta_, h_, params_.ratio_bound(), params_.h_min,
                               params_.k_max);
        }
        prev_alpha_ = alpha;
        prev_beta_ = beta;
        window_alpha_ = window_beta_ = 0;
        window_slots_ = 0;
    }
    if (params_.reset_enabled && (outcome.t + 1) % params_.reset_period == 0) {
        h_ = params_.k_max;
        prev_alpha_.reset();
        prev_beta_.reset();
    }
}

BackpressurePolicy::BackpressurePolicy(BackpressureParams params) : params_(std::move(params)) {
    if (params_.tau_mm < 0 || params_.tau_rf < 0) throw ParameterError("CSI delays must be non-negative");
    params_.mm_link.validate();
    if (!(params_.rf_rate > 0.0)) throw ParameterError("RF rate must be positive");
}

double BackpressurePolicy::expected_mm(const SystemView& view) const {
    const std::int64_t observed_slot = view.t - params_.tau_mm;
    if (observed_slot < 0 || static_cast<std::size_t>(observed_slot) >= view.link_history.size()) {
        return params_.mm_link.rate_on * params_.mm_link.stationary_on();
    }
    const bool observed = view.link_history[static_cast<std::size_t>(observed_slot)] != 0;
    return channel::expected_rate_delayed(params_.mm_link, observed, params_.tau_mm);
}

void BackpressurePolicy::on_slot_start(const SystemView& view) {
    // The RF link is always available, so its delayed estimate is exact.
    choice_ = backpressure_select(view.q_s, view.q_mm, view.q_rf, expected_mm(view), params_.rf_rate);
    if (view.q_s == 0 || choice_.best_weight() <= 0.0) {
        budget_ = 0;
        return;
    }
    const double rate = choice_.route == Route::mm ? params_.mm_link.rate_on : params_.rf_rate;
    budget_ = static_cast<std::size_t>(std::ceil(rate));
}

std::optional<Route> BackpressurePolicy::route_next(const SystemView&, Rng&) {
    if (budget_ == 0) return std::nullopt;
    --budget_;
    return choice_.route;
}

PolicyKind parse_policy_kind(const std::string& s) {
    if (s == "threshold") return PolicyKind::threshold;
    if (s == "online") return PolicyKind::online;
    if (s == "probabilistic") return PolicyKind::probabilistic;
    if (s == "backpressure") return PolicyKind::backpressure;
    throw ConfigError("unknown policy '" + s + "' (expected threshold|online|probabilistic|backpressure)");
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::threshold: return "threshold";
        case PolicyKind::online: return "online";
        case PolicyKind::probabilistic: return "probabilistic";
        case PolicyKind::backpressure: return "backpressure";
    }
    return "unknown";
}

std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const channel::MarkovLinkModel& mm_link,
                                    double rf_rate) {
    switch (config.kind) {
        case PolicyKind::threshold: return std::make_unique<ThresholdPolicy>(config.h);
        case PolicyKind::online: return std::make_unique<OnlineThresholdPolicy>(config.online);
        case PolicyKind::probabilistic: return std::make_unique<ProbabilisticPolicy>(config.p);
        case PolicyKind::backpressure:
            return std::make_unique<BackpressurePolicy>(
                BackpressureParams{config.tau_mm, config.tau_rf, mm_link, rf_rate});
    }
    throw ConfigError("unhandled policy kind");
}

}  // namespace mmsched::policies
