#include "mmsched/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "mmsched/error.hpp"

namespace mmsched::engine {

RenegeMode parse_renege_mode(const std::string& s) {
    if (s == "none") return RenegeMode::none;
    if (s == "timeout") return RenegeMode::timeout;
    if (s == "adaptive") return RenegeMode::adaptive;
    if (s == "rate") return RenegeMode::rate;
    throw ConfigError("unknown reneging mode '" + s + "' (expected none|timeout|adaptive|rate)");
}

HolClock parse_hol_clock(const std::string& s) {
    if (s == "entry") return HolClock::entry;
    if (s == "head") return HolClock::head;
    throw ConfigError("unknown head-of-line clock '" + s + "' (expected entry|head)");
}

std::string to_string(RenegeMode mode) {
    switch (mode) {
        case RenegeMode::none: return "none";
        case RenegeMode::timeout: return "timeout";
        case RenegeMode::adaptive: return "adaptive";
        case RenegeMode::rate: return "rate";
    }
    return "unknown";
}

std::string to_string(HolClock clock) { return clock == HolClock::entry ? "entry" : "head"; }

void ArrivalConfig::validate() const {
    if (!(batch_prob >= 0.0 && batch_prob <= 1.0)) throw ConfigError("arrivals.batch_prob must lie in [0, 1]");
    if (!(batch_mean > 0.0)) throw ConfigError("arrivals.batch_mean must be positive");
    if (!(batch_std >= 0.0)) throw ConfigError("arrivals.batch_std must be non-negative");
}

void ServiceConfig::validate() const {
    if (!(rf_rate > 0.0)) throw ConfigError("service.rf_rate must be positive");
    if (!(mm_rate > rf_rate)) throw ConfigError("service.mm_rate must exceed service.rf_rate");
    if (static_cast<double>(renege_link_rate) < mm_rate) {
        throw ConfigError("service.renege_link_rate must be at least service.mm_rate");
    }
    if (!(mm_service_prob > 0.0 && mm_service_prob <= 1.0)) {
        throw ConfigError("service.mm_service_prob must lie in (0, 1]");
    }
    if (renege != RenegeMode::none && renege != RenegeMode::adaptive && !(timeout_slots >= 0.0)) {
        throw ConfigError("service.timeout_slots must be non-negative");
    }
    if (renege == RenegeMode::adaptive && !(initial_timeout_slots >= 0.0)) {
        throw ConfigError("service.initial_timeout_slots must be non-negative");
    }
    if (renege == RenegeMode::rate && !(sigma >= 0.0 && sigma <= 1.0)) {
        throw ConfigError("service.sigma must lie in [0, 1]");
    }
}

void SimConfig::validate() const {
    arrivals.validate();
    service.validate();
    if (horizon < 1) throw ConfigError("run.horizon must be at least one slot");
    if (buffers.scheduler == 0 || buffers.mm == 0 || buffers.rf == 0) {
        throw ConfigError("buffer capacities must be positive");
    }
    if (reward.c < 0.0) throw ConfigError("reward.c must be non-negative");
    if (policy.kind == policies::PolicyKind::threshold && policy.h > buffers.mm) {
        throw ConfigError("policy.h must not exceed the mmWave buffer capacity");
    }
    if (policy.kind == policies::PolicyKind::online) {
        try {
            policy.online.validate();
        } catch (const ParameterError& e) {
            throw ConfigError(std::string("policy: ") + e.what());
        }
        if (policy.online.k_max > buffers.mm) throw ConfigError("policy.k_max must not exceed the mmWave buffer");
    }
}

std::int64_t SystemState::hol_wait(HolClock clock) const {
    if (q_mm.empty()) return 0;
    const std::int64_t since = clock == HolClock::entry ? *q_mm.front().mm_entry_slot : head_since;
    return std::max<std::int64_t>(0, t - since);
}

Simulator::Simulator(const SimConfig& config, std::unique_ptr<policies::Policy> policy, std::uint64_t seed)
    : config_(config),
      policy_(std::move(policy)),
      arrival_rng_(make_rng(seed, Stream::arrivals)),
      policy_rng_(make_rng(seed, Stream::policy)),
      service_rng_(make_rng(seed, Stream::service)),
      adaptive_(config.service.initial_timeout_slots) {
    config_.validate();
    if (!policy_) throw ParameterError("simulator needs a policy");
}

double Simulator::current_timeout() const {
    switch (config_.service.renege) {
        case RenegeMode::none: return std::numeric_limits<double>::infinity();
        case RenegeMode::adaptive: return adaptive_.value();
        default: return config_.service.timeout_slots;
    }
}

void Simulator::push_mm(std::int64_t entry_slot) {
    Packet p;
    p.id = next_id_++;
    p.arrival_slot = entry_slot;
    p.mm_entry_slot = entry_slot;
    if (state_.q_mm.empty()) state_.head_since = entry_slot;
    state_.q_mm.push_back(p);
}

void Simulator::push_rf(std::int64_t entry_slot) {
    Packet p;
    p.id = next_id_++;
    p.arrival_slot = entry_slot;
    p.rf_entry_slot = entry_slot;
    state_.q_rf.push_back(p);
}

void Simulator::admit_mm(Packet p) {
    p.mm_entry_slot = state_.t;
    if (state_.q_mm.empty()) state_.head_since = state_.t + 1;
    state_.q_mm.push_back(p);
}

void Simulator::admit_rf(Packet p, SlotMetrics& m) {
    if (state_.q_rf.size() >= config_.buffers.rf) {
        ++m.dropped;
        return;
    }
    p.rf_entry_slot = state_.t;
    state_.q_rf.push_back(p);
}

void Simulator::pop_mm_head() {
    const Packet& head = state_.q_mm.front();
    totals_.mm_wait_sum += static_cast<double>(state_.t - *head.mm_entry_slot);
    ++totals_.mm_leavers;
    state_.q_mm.pop_front();
    state_.head_since = state_.t + 1;
}

std::size_t Simulator::capacity(double rate, double& credit) const {
    const double total = credit + rate;
    const double whole = std::floor(total);
    credit = total - whole;
    return static_cast<std::size_t>(whole);
}

void Simulator::renege(SlotMetrics& m) {
    const auto& svc = config_.service;
    auto& q = state_.q_mm;
    if (svc.renege == RenegeMode::none || q.empty()) return;

    // Raw head wait; a head that reached the front during this slot reads -1
    // under the head clock and is never eligible.
    auto raw_wait = [&] {
        const std::int64_t since = svc.clock == HolClock::entry ? *q.front().mm_entry_slot : state_.head_since;
        return static_cast<double>(state_.t - since);
    };
    auto move_head = [&] {
        Packet p = q.front();
        pop_mm_head();
        p.reneged = true;
        ++m.gamma;
        admit_rf(p, m);
    };

    if (svc.renege == RenegeMode::rate) {
        const bool forced = raw_wait() >= svc.timeout_slots;
        const double p = std::min(1.0, svc.sigma * static_cast<double>(q.size()));
        if (forced || bernoulli(service_rng_, p)) move_head();
        return;
    }
    const double limit = current_timeout();
    std::size_t moved = 0;
    while (!q.empty() && moved < svc.renege_link_rate && raw_wait() >= limit) {
        move_head();
        ++moved;
    }
}

SlotMetrics Simulator::step(bool link_on, std::span<const std::uint8_t> link_history) {
    SlotMetrics m;
    m.timeout = current_timeout();
    const std::size_t mm_before = state_.q_mm.size();
    const std::int64_t t = state_.t;

    // (1) arrivals
    if (bernoulli(arrival_rng_, config_.arrivals.batch_prob)) {
        std::normal_distribution<double> size(config_.arrivals.batch_mean, config_.arrivals.batch_std);
        const double draw = config_.arrivals.batch_std == 0.0 ? config_.arrivals.batch_mean : size(arrival_rng_);
        const auto n = static_cast<std::size_t>(std::max<long long>(0, std::llround(draw)));
        for (std::size_t i = 0; i < n; ++i) {
            ++m.arrivals;
            if (state_.q_s.size() >= config_.buffers.scheduler) {
                ++m.dropped;
                continue;
            }
            Packet p;
            p.id = next_id_++;
            p.arrival_slot = t;
            state_.q_s.push_back(p);
        }
    }

    // (2) routing
    auto view = [&] {
        return policies::SystemView{t, state_.q_s.size(), state_.q_mm.size(), state_.q_rf.size(), link_history};
    };
    policy_->on_slot_start(view());
    while (!state_.q_s.empty()) {
        const auto route = policy_->route_next(view(), policy_rng_);
        if (!route) break;
        Packet p = state_.q_s.front();
        state_.q_s.pop_front();
        if (*route == policies::Route::mm && state_.q_mm.size() < config_.buffers.mm) {
            admit_mm(p);
            ++m.beta;
        } else {
            admit_rf(p, m);
        }
    }

    // (3) reneging
    renege(m);

    // (4) service
    m.wasted = link_on && state_.q_mm.empty() && (state_.q_s.size() + state_.q_rf.size() > 0);
    if (link_on) {
        const double prob = config_.service.mm_service_prob;
        const bool working = prob >= 1.0 || bernoulli(service_rng_, prob);
        if (working) {
            const std::size_t n = std::min(capacity(config_.service.mm_rate, mm_credit_), state_.q_mm.size());
            for (std::size_t i = 0; i < n; ++i) {
                totals_.delay_sum += static_cast<double>(t - state_.q_mm.front().arrival_slot);
                pop_mm_head();
                ++m.alpha;
            }
        }
    }
    const std::size_t n_rf = std::min(capacity(config_.service.rf_rate, rf_credit_), state_.q_rf.size());
    for (std::size_t i = 0; i < n_rf; ++i) {
        const Packet& p = state_.q_rf.front();
        totals_.rf_wait_sum += static_cast<double>(t - p.rf_entry_slot);
        totals_.delay_sum += static_cast<double>(t - p.arrival_slot);
        adaptive_.record(t - p.rf_entry_slot);
        state_.q_rf.pop_front();
        ++m.rf_served;
    }

    if (state_.q_mm.size() + m.alpha + m.gamma != mm_before + m.beta) {
        throw std::logic_error("mmWave queue balance violated at slot " + std::to_string(t));
    }

    policy_->on_slot_end({t, m.alpha, m.beta});

    // (5) clock
    ++state_.t;

    totals_.arrivals += m.arrivals;
    totals_.alpha += m.alpha;
    totals_.beta += m.beta;
    totals_.gamma += m.gamma;
    totals_.rf_served += m.rf_served;
    totals_.dropped += m.dropped;
    totals_.wasted += m.wasted ? 1 : 0;
    totals_.timeout_sum += m.timeout;
    return m;
}

SimulationReport run(const SimConfig& config, const channel::LinkTrace& link) {
    config.validate();
    channel::MarkovLinkModel mm_link;
    mm_link.rate_on = config.service.mm_rate * config.service.mm_service_prob;
    if (config.policy.kind == policies::PolicyKind::backpressure) {
        mm_link = channel::fit_markov(link, config.service.mm_rate * config.service.mm_service_prob);
    }
    Simulator sim(config, policies::make_policy(config.policy, mm_link, config.service.rf_rate), config.seed);

    const auto horizon = static_cast<std::size_t>(config.horizon);
    std::vector<std::uint8_t> l(horizon);
    for (std::size_t i = 0; i < horizon; ++i) l[i] = link.slots()[i % link.size()];

    SimulationReport rep;
    rep.policy = policies::to_string(config.policy.kind);
    rep.seed = config.seed;
    rep.horizon = config.horizon;
    if (config.record_series) rep.series.reserve(horizon);
    Occupancy occ;
    if (config.occupancy_bounds) {
        occ.q_max = config.occupancy_bounds->first;
        occ.d_max = config.occupancy_bounds->second;
        occ.on.assign((occ.q_max + 1) * (occ.d_max + 1), 0);
        occ.off.assign(occ.on.size(), 0);
    }

    for (std::size_t t = 0; t < horizon; ++t) {
        if (config.occupancy_bounds) {
            const auto q = sim.state().q_mm.size();
            const auto d = static_cast<std::size_t>(sim.state().hol_wait(config.service.clock));
            ++occ.total;
            if (q > occ.q_max || d > occ.d_max) {
                ++occ.out_of_range;
            } else {
                (l[t] ? occ.on : occ.off)[q * (occ.d_max + 1) + d] += 1;
            }
        }
        const auto m = sim.step(l[t] != 0, std::span<const std::uint8_t>(l.data(), t + 1));
        if (config.record_series) {
            const auto& s = sim.state();
            rep.series.push_back({static_cast<std::int64_t>(t), s.q_s.size(), s.q_mm.size(), s.q_rf.size(), int(l[t]),
                                  m.alpha, m.beta, m.gamma, m.timeout});
        }
    }

    const auto& tot = sim.totals();
    const double T = static_cast<double>(horizon);
    rep.alpha = static_cast<double>(tot.alpha) / T;
    rep.beta = static_cast<double>(tot.beta) / T;
    rep.gamma = static_cast<double>(tot.gamma) / T;
    rep.rf_throughput = static_cast<double>(tot.rf_served) / T;
    rep.throughput = static_cast<double>(tot.alpha + tot.rf_served) / T;
    rep.reward = (config.reward.r * static_cast<double>(tot.alpha) - config.reward.c * static_cast<double>(tot.gamma)) / T;
    rep.avg_wait_mm = tot.mm_leavers ? tot.mm_wait_sum / static_cast<double>(tot.mm_leavers) : 0.0;
    rep.avg_wait_rf = tot.rf_served ? tot.rf_wait_sum / static_cast<double>(tot.rf_served) : 0.0;
    const auto delivered = tot.alpha + tot.rf_served;
    rep.avg_delay = delivered ? tot.delay_sum / static_cast<double>(delivered) : 0.0;
    rep.link_wastage = static_cast<double>(tot.wasted) / T;
    rep.final_timeout = sim.current_timeout();
    rep.arrivals = tot.arrivals;
    rep.dropped = tot.dropped;
    const auto& s = sim.state();
    rep.backlog = s.q_s.size() + s.q_mm.size() + s.q_rf.size();
    if (config.occupancy_bounds) rep.occupancy = std::move(occ);
    return rep;
}

namespace {

nlohmann::ordered_json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

void write_report_json(std::ostream& out, const SimulationReport& r) {
    nlohmann::ordered_json j;
    j["policy"] = r.policy;
    j["seed"] = r.seed;
    j["horizon"] = r.horizon;
    j["alpha"] = r.alpha;
    j["beta"] = r.beta;
    j["gamma"] = r.gamma;
    j["rf_throughput"] = r.rf_throughput;
    j["throughput"] = r.throughput;
    j["reward"] = r.reward;
    j["avg_wait_mm"] = r.avg_wait_mm;
    j["avg_wait_rf"] = r.avg_wait_rf;
    j["avg_delay"] = r.avg_delay;
    j["link_wastage"] = r.link_wastage;
    j["final_timeout"] = finite_or_null(r.final_timeout);
    j["arrivals"] = r.arrivals;
    j["dropped"] = r.dropped;
    j["backlog"] = r.backlog;
    out << j.dump() << '\n';
}

void write_series_csv(std::ostream& out, const SimulationReport& r) {
    out << "slot,Qs,Qmm,Qrf,L,alpha,beta,gamma,Tout\n";
    char buf[64];
    for (const auto& row : r.series) {
        std::snprintf(buf, sizeof buf, "%.17g", row.timeout);
        out << row.slot << ',' << row.q_s << ',' << row.q_mm << ',' << row.q_rf << ',' << row.link << ','
            << row.alpha << ',' << row.beta << ',' << row.gamma << ',' << buf << '\n';
    }
}

}  // namespace mmsched::engine
