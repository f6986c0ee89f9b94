#include "mmsched/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "mmsched/error.hpp"

namespace mmsched::analysis {

namespace {

double cap01(double p) { return std::clamp(p, 0.0, 1.0); }

// Probability-weighted event frequencies out of one state.
struct EventRates {
    double admitted = 0.0, reneged = 0.0, served = 0.0;
};

EventRates event_rates(const ChainModel& m, std::size_t q, std::size_t d, bool on, bool admit) {
    EventRates e;
    for_each_transition(m, q, d, on, admit, [&](const Transition& t) {
        if (t.admitted) e.admitted += t.prob;
        if (t.reneged) e.reneged += t.prob;
        if (t.served) e.served += t.prob;
    });
    return e;
}

// sum_k p[k] * v M^k, with Mt = M^T.
Eigen::VectorXd expect_power(const SparseMatrix& mt, const Eigen::VectorXd& v, const DurationPmf& pmf) {
    Eigen::VectorXd x = v;
    Eigen::VectorXd acc = pmf.p[0] * x;
    for (std::size_t k = 1; k < pmf.p.size(); ++k) {
        x = mt * x;
        if (pmf.p[k] != 0.0) acc += pmf.p[k] * x;
    }
    return acc;
}

// sum_{k>=1} P(T >= k) * v M^{k-1}: expected occupation over one period.
Eigen::VectorXd expect_occupation(const SparseMatrix& mt, const Eigen::VectorXd& v, const DurationPmf& pmf) {
    std::vector<double> tail(pmf.p.size() + 1, 0.0);
    for (std::size_t k = pmf.p.size(); k-- > 0;) tail[k] = tail[k + 1] + pmf.p[k];
    Eigen::VectorXd x = v;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(v.size());
    for (std::size_t k = 1; k < pmf.p.size(); ++k) {
        acc += tail[k] * x;
        x = mt * x;
    }
    return acc;
}

}  // namespace

void ChainModel::validate() const {
    if (h > q_max) throw ParameterError("threshold h must not exceed Q_max");
    if (!(lambda >= 0.0) || !(mu >= 0.0) || !(sigma >= 0.0)) throw ParameterError("chain rates must be non-negative");
    if (sigma * static_cast<double>(q_max) > 1.0 + 1e-12) {
        throw ParameterError("sigma * Q_max must not exceed 1 (one renege per slot)");
    }
    const double n = static_cast<double>(q_max + 1) * static_cast<double>(t_out + 1);
    if (n > static_cast<double>(state_cap)) {
        throw SizeError("chain has " + std::to_string(static_cast<long double>(n)) + " states, above the cap of " +
                        std::to_string(state_cap));
    }
}

void for_each_transition(const ChainModel& m, std::size_t q, std::size_t d, bool on, bool admit,
                         const std::function<void(const Transition&)>& fn) {
    const double pa = cap01(m.lambda);
    const bool old_head = q > 0;
    for (int a = 0; a < 2; ++a) {
        const double p_a = a ? pa : 1.0 - pa;
        if (p_a == 0.0) continue;
        const bool adm = a && admit && q < m.q_max;
        const std::size_t q1 = q + (adm ? 1 : 0);
        double p_renege = 0.0;
        if (q1 > 0) {
            const bool forced = old_head && d >= m.t_out;
            p_renege = forced ? 1.0 : cap01(m.sigma * static_cast<double>(q1));
        }
        for (int g = 0; g < 2; ++g) {
            const double p_g = g ? p_renege : 1.0 - p_renege;
            if (p_g == 0.0) continue;
            const std::size_t q2 = q1 - static_cast<std::size_t>(g);
            const double p_serve = on && q2 > 0 ? cap01(m.mu) : 0.0;
            for (int s = 0; s < 2; ++s) {
                const double p_s = s ? p_serve : 1.0 - p_serve;
                if (p_s == 0.0) continue;
                const std::size_t q3 = q2 - static_cast<std::size_t>(s);
                std::size_t d3 = 0;
                if (q3 > 0 && !g && !s && old_head) d3 = d + 1;
                fn({p_a * p_g * p_s, q3, d3, adm, g != 0, s != 0});
            }
        }
    }
}

double TransitionMatrices::stochasticity_error() const {
    double worst = 0.0;
    for (const SparseMatrix* mat : {&on, &off}) {
        for (Eigen::Index r = 0; r < mat->outerSize(); ++r) {
            double sum = 0.0;
            for (SparseMatrix::InnerIterator it(*mat, r); it; ++it) sum += it.value();
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    return worst;
}

TransitionMatrices build_matrices(const ChainModel& model) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(model.states());
    TransitionMatrices out;
    for (int on = 1; on >= 0; --on) {
        std::vector<Eigen::Triplet<double>> triplets;
        for (std::size_t q = 0; q <= model.q_max; ++q) {
            for (std::size_t d = 0; d <= model.t_out; ++d) {
                const auto row = static_cast<Eigen::Index>(model.index(q, d));
                for_each_transition(model, q, d, on != 0, q < model.h, [&](const Transition& t) {
                    triplets.emplace_back(row, static_cast<Eigen::Index>(model.index(t.q, t.d)), t.prob);
                });
            }
        }
        SparseMatrix mat(n, n);
        mat.setFromTriplets(triplets.begin(), triplets.end());  // duplicates are summed
        (on ? out.on : out.off) = std::move(mat);
    }
    return out;
}

DurationPmf DurationPmf::point(std::size_t k) {
    DurationPmf d;
    d.p.assign(k + 1, 0.0);
    d.p[k] = 1.0;
    return d;
}

DurationPmf DurationPmf::uniform(std::size_t lo, std::size_t hi) {
    if (lo > hi) throw ParameterError("uniform duration needs lo <= hi");
    DurationPmf d;
    d.p.assign(hi + 1, 0.0);
    for (std::size_t k = lo; k <= hi; ++k) d.p[k] = 1.0 / static_cast<double>(hi - lo + 1);
    return d;
}

DurationPmf DurationPmf::from_law(const channel::DurationLaw& law, double quantile) {
    if (!(quantile > 0.0 && quantile < 1.0)) throw ParameterError("truncation quantile must lie in (0, 1)");
    if (!(law.mean_slots > 0.0)) throw ParameterError("mean duration must be positive");
    if (law.shape == 0.0) {
        return point(static_cast<std::size_t>(std::max<long long>(1, std::llround(law.mean_slots))));
    }
    DurationPmf d;
    d.p.push_back(0.0);
    double prev = 0.0;
    for (std::int64_t k = 1;; ++k) {
        const double cdf = law.rounded_cdf(k);
        d.p.push_back(cdf - prev);
        prev = cdf;
        if (cdf >= quantile) break;
        if (k > 10000000) throw SizeError("duration support exceeds 10^7 slots before the truncation quantile");
    }
    d.truncated_mass = 1.0 - prev;
    for (auto& x : d.p) x /= prev;
    return d;
}

double DurationPmf::mean() const {
    double m = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) m += static_cast<double>(k) * p[k];
    return m;
}

void DurationPmf::validate() const {
    if (p.empty()) throw ParameterError("duration pmf is empty");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw ParameterError("duration pmf has a negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("duration pmf does not sum to 1");
}

StationaryDistribution limiting_distribution(const TransitionMatrices& m, const DurationPmf& on,
                                             const DurationPmf& off, const PowerIterationOptions& opt) {
    on.validate();
    off.validate();
    const double cycle = on.mean() + off.mean();
    if (!(cycle > 0.0)) throw ParameterError("ON and OFF periods cannot both be empty");
    const SparseMatrix on_t = m.on.transpose();
    const SparseMatrix off_t = m.off.transpose();
    const auto n = static_cast<Eigen::Index>(m.states());

    auto embedded = [&](const Eigen::VectorXd& v) { return expect_power(off_t, expect_power(on_t, v, on), off); };

    StationaryDistribution out;
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        const Eigen::VectorXd w = embedded(v);
        residual = (w - v).lpNorm<1>();
        if (residual < opt.tolerance) break;
        // Averaging with the identity removes periodicity without moving the fixed point.
        v = 0.5 * (v + w);
        v /= v.sum();
    }
    if (!(residual < opt.tolerance)) {
        throw NumericalError("embedded-chain power iteration did not converge in " +
                                 std::to_string(opt.max_iterations) + " iterations",
                             residual);
    }
    if (opt.polish_max_states > 0 && static_cast<std::size_t>(n) <= opt.polish_max_states) {
        // nu (A - I) = 0 with one equation replaced by sum(nu) = 1.
        Eigen::MatrixXd a(n, n);
        for (Eigen::Index i = 0; i < n; ++i) a.row(i) = embedded(Eigen::VectorXd::Unit(n, i)).transpose();
        Eigen::MatrixXd sys = a.transpose() - Eigen::MatrixXd::Identity(n, n);
        sys.row(n - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs[n - 1] = 1.0;
        Eigen::VectorXd exact = sys.fullPivLu().solve(rhs);
        exact = exact.cwiseMax(0.0);
        exact /= exact.sum();
        const double exact_residual = (embedded(exact) - exact).lpNorm<1>();
        if (exact.allFinite() && exact_residual <= residual) {
            v = exact;
            residual = exact_residual;
        }
    }
    out.nu = v;
    out.iterations = it;
    out.residual = residual;
    out.xi_on = expect_occupation(on_t, v, on) / cycle;
    out.xi_off = expect_occupation(off_t, expect_power(on_t, v, on), off) / cycle;
    const double total = out.xi_on.sum() + out.xi_off.sum();
    out.xi_on /= total;
    out.xi_off /= total;
    out.xi = out.xi_on + out.xi_off;
    out.truncated_mass = on.truncated_mass + off.truncated_mass;
    return out;
}

CurvePoint evaluate_threshold(const ChainModel& model, const DurationPmf& on, const DurationPmf& off,
                              const PowerIterationOptions& opt) {
    const auto mats = build_matrices(model);
    const auto dist = limiting_distribution(mats, on, off, opt);
    CurvePoint p;
    p.h = model.h;
    for (std::size_t q = 0; q <= model.q_max; ++q) {
        for (std::size_t d = 0; d <= model.t_out; ++d) {
            const auto i = static_cast<Eigen::Index>(model.index(q, d));
            const bool admit = q < model.h;
            const auto e_on = event_rates(model, q, d, true, admit);
            const auto e_off = event_rates(model, q, d, false, admit);
            p.e_beta += dist.xi_on[i] * e_on.admitted + dist.xi_off[i] * e_off.admitted;
            p.e_alpha += dist.xi_on[i] * e_on.served;
            p.e_gamma += dist.xi_on[i] * e_on.reneged + dist.xi_off[i] * e_off.reneged;
        }
    }
    return p;
}

ThresholdCurve reprice(ThresholdCurve curve, const RewardParams& reward) {
    curve.reward = reward;
    for (auto& p : curve.points) {
        p.phi = (reward.w + reward.c) * p.psi;
        p.objective = (reward.r + reward.c) * p.e_alpha - (reward.w + reward.c) * p.e_beta;
    }
    return curve;
}

ThresholdCurve threshold_curve(const ChainModel& base, std::size_t h_max, const DurationPmf& on,
                               const DurationPmf& off, const RewardParams& reward,
                               const PowerIterationOptions& opt) {
    if (h_max > base.q_max) throw ParameterError("h_max must not exceed Q_max");
    ThresholdCurve curve;
    for (std::size_t h = 0; h <= h_max; ++h) {
        ChainModel m = base;
        m.h = h;
        curve.points.push_back(evaluate_threshold(m, on, off, opt));
    }
    for (std::size_t h = 0; h <= h_max; ++h) {
        auto& p = curve.points[h];
        if (h == 0) {
            p.psi = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const auto& prev = curve.points[h - 1];
        const double d_alpha = p.e_alpha - prev.e_alpha;
        const double d_beta = p.e_beta - prev.e_beta;
        p.psi = d_alpha <= 0.0 ? std::numeric_limits<double>::infinity() : d_beta / d_alpha;
    }
    return reprice(std::move(curve), reward);
}

OptimalThreshold optimal_threshold(const ThresholdCurve& curve, double r, double c, double w) {
    if (w > r) throw ParameterError("subsidy W must not exceed the reward r");
    if (c < 0.0) throw ParameterError("reneging cost c must be non-negative");
    if (!(w + c > 0.0)) throw ParameterError("W + c must be positive");
    if (curve.points.empty()) throw ParameterError("threshold curve is empty");
    const double bound = r + c;
    for (std::size_t h = 0; h + 1 < curve.points.size(); ++h) {
        const double phi_next = (w + c) * curve.points[h + 1].psi;
        if (phi_next >= bound) return {curve.points[h].h, false};
    }
    return {curve.points.back().h, true};
}

std::vector<std::size_t> objective_argmax(const ThresholdCurve& curve, double tol) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : curve.points) best = std::max(best, p.objective);
    std::vector<std::size_t> out;
    for (const auto& p : curve.points) {
        if (p.objective >= best - tol) out.push_back(p.h);
    }
    return out;
}

namespace {

struct Edge {
    std::size_t to;
    double prob;
};

struct ActionModel {
    double reward = 0.0;
    std::vector<Edge> edges;
};

ActionModel action_model(const ChainModel& m, const RewardParams& rw, std::size_t q, std::size_t d, bool admit) {
    ActionModel a;
    double admitted = 0.0;
    for_each_transition(m, q, d, true, admit, [&](const Transition& t) {
        a.reward += t.prob * ((t.served ? rw.r : 0.0) - (t.reneged ? rw.c : 0.0));
        if (t.admitted) admitted += t.prob;
        a.edges.push_back({m.index(t.q, t.d), t.prob});
    });
    a.reward += rw.w * (cap01(m.lambda) - admitted);
    return a;
}

bool kept(const ChainModel& m, const ValueIterationResult& vi, std::size_t q, std::size_t d, StateFilter f) {
    switch (f) {
        case StateFilter::all: return true;
        case StateFilter::valid: return q > 0 || d == 0;
        case StateFilter::reachable: return vi.reachable[m.index(q, d)];
    }
    return true;
}

}  // namespace

ValueIterationResult value_iteration(const ChainModel& model, const RewardParams& reward,
                                     const ValueIterationOptions& opt) {
    model.validate();
    const std::size_t n = model.states();
    std::vector<ActionModel> passive(n), active(n);
    std::vector<bool> can_admit(n, false);
    for (std::size_t q = 0; q <= model.q_max; ++q) {
        for (std::size_t d = 0; d <= model.t_out; ++d) {
            const auto i = model.index(q, d);
            passive[i] = action_model(model, reward, q, d, false);
            can_admit[i] = q < model.q_max && model.lambda > 0.0;
            if (can_admit[i]) active[i] = action_model(model, reward, q, d, true);
        }
    }
    auto q_value = [](const ActionModel& a, const Eigen::VectorXd& v) {
        double x = a.reward;
        for (const auto& e : a.edges) x += e.prob * v[static_cast<Eigen::Index>(e.to)];
        return x;
    };

    ValueIterationResult res;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd next(static_cast<Eigen::Index>(n));
    double span = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = q_value(passive[i], v);
            if (can_admit[i]) best = std::max(best, q_value(active[i], v));
            // Aperiodicity transform: P -> (I + P) / 2, rewards halved.
            next[static_cast<Eigen::Index>(i)] = 0.5 * best + 0.5 * v[static_cast<Eigen::Index>(i)];
        }
        const Eigen::VectorXd diff = next - v;
        span = diff.maxCoeff() - diff.minCoeff();
        res.gain = diff.maxCoeff() + diff.minCoeff();  // twice the midpoint, undoing the halving
        v = next.array() - next[0];
        if (span < opt.tolerance) break;
    }
    if (!(span < opt.tolerance)) {
        throw NumericalError("relative value iteration did not converge in " + std::to_string(opt.max_iterations) +
                                 " iterations",
                             span);
    }
    res.iterations = it;
    res.span = span;
    res.value = v;
    res.admit.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (can_admit[i]) res.admit[i] = q_value(active[i], v) > q_value(passive[i], v) + opt.tie_tolerance;
    }

    res.reachable.assign(n, false);
    std::deque<std::size_t> frontier{model.index(0, 0)};
    res.reachable[frontier.front()] = true;
    while (!frontier.empty()) {
        const auto s = frontier.front();
        frontier.pop_front();
        for (const auto& e : (res.admit[s] ? active[s] : passive[s]).edges) {
            if (e.prob > 0.0 && !res.reachable[e.to]) {
                res.reachable[e.to] = true;
                frontier.push_back(e.to);
            }
        }
    }
    return res;
}

std::vector<std::optional<std::size_t>> slice_thresholds(const ChainModel& model, const ValueIterationResult& vi,
                                                         StateFilter filter) {
    std::vector<std::optional<std::size_t>> out;
    for (std::size_t d = 0; d <= model.t_out; ++d) {
        std::optional<std::size_t> t;
        bool any = false;
        for (std::size_t q = 0; q <= model.q_max; ++q) {
            if (!kept(model, vi, q, d, filter)) continue;
            any = true;
            if (!vi.admit[model.index(q, d)]) {
                t = q;
                break;
            }
        }
        if (any && !t) t = model.q_max;
        out.push_back(t);
    }
    return out;
}

bool monotone_in_q(const ChainModel& model, const ValueIterationResult& vi, StateFilter filter) {
    for (std::size_t d = 0; d <= model.t_out; ++d) {
        bool refused = false;
        for (std::size_t q = 0; q <= model.q_max; ++q) {
            if (!kept(model, vi, q, d, filter)) continue;
            if (!vi.admit[model.index(q, d)]) {
                refused = true;
            } else if (refused) {
                return false;
            }
        }
    }
    return true;
}

std::optional<std::size_t> extracted_threshold(const ChainModel& model, const ValueIterationResult& vi) {
    // Reachable states never include Q above the first refused level, so the
    // candidate is the smallest refused Q; every reachable state must agree.
    std::size_t h = model.q_max;
    for (std::size_t i = 0; i < model.states(); ++i) {
        if (vi.reachable[i] && !vi.admit[i]) h = std::min(h, i / (model.t_out + 1));
    }
    for (std::size_t i = 0; i < model.states(); ++i) {
        if (vi.reachable[i] && vi.admit[i] != (i / (model.t_out + 1) < h)) return std::nullopt;
    }
    return h;
}

std::size_t induced_threshold(const ChainModel& model, const ValueIterationResult& vi) {
    const auto n = static_cast<Eigen::Index>(model.states());
    if (n > 5000) throw SizeError("induced threshold is limited to 5000 states");
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t q = 0; q <= model.q_max; ++q) {
        for (std::size_t d = 0; d <= model.t_out; ++d) {
            const auto i = model.index(q, d);
            for_each_transition(model, q, d, true, vi.admit[i], [&](const Transition& t) {
                p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(model.index(t.q, t.d))) += t.prob;
            });
        }
    }
    Eigen::MatrixXd sys = p.transpose() - Eigen::MatrixXd::Identity(n, n);
    sys.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs[n - 1] = 1.0;
    const Eigen::VectorXd pi = sys.fullPivLu().solve(rhs);
    for (std::size_t q = 0; q <= model.q_max; ++q) {
        double total = 0.0, admitted = 0.0;
        for (std::size_t d = 0; d <= model.t_out; ++d) {
            const auto i = model.index(q, d);
            total += pi[static_cast<Eigen::Index>(i)];
            if (vi.admit[i]) admitted += pi[static_cast<Eigen::Index>(i)];
        }
        if (total > 1e-12 && admitted < 0.5 * total) return q;
    }
    return model.q_max;
}

}  // namespace mmsched::analysis
