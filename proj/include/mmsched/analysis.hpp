#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mmsched/channel.hpp"

namespace mmsched::analysis {

/// Single-queue chain over x = (Q, D): Q in 0..q_max, D in 0..t_out. Per slot
/// at most one arrival (probability min(lambda, 1), admitted iff Q < h), one
/// renege (forced when the head has waited t_out slots, otherwise
/// probability min(1, sigma * Q)) and one service (probability mu when ON).
struct ChainModel {
    std::size_t q_max = 8;
    std::size_t t_out = 4;
    double lambda = 0.5;
    double mu = 0.5;
    double sigma = 0.05;
    std::size_t h = 8;
    std::size_t state_cap = 1000000;

    void validate() const;
    [[nodiscard]] std::size_t states() const { return (q_max + 1) * (t_out + 1); }
    [[nodiscard]] std::size_t index(std::size_t q, std::size_t d) const { return q * (t_out + 1) + d; }
};

/// Events of one transition, for reward bookkeeping.
struct Transition {
    double prob;
    std::size_t q, d;
    bool admitted, reneged, served;
};

/// Enumerates the one-slot transitions out of (q, d) with link state `on` when
/// the arriving packet (if any) is offered to the queue iff `admit`. Offers at
/// q == q_max are refused. Probabilities of the emitted transitions sum to 1;
/// equal successors may be emitted more than once.
void for_each_transition(const ChainModel& m, std::size_t q, std::size_t d, bool on, bool admit,
                         const std::function<void(const Transition&)>& fn);

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TransitionMatrices {
    SparseMatrix on;
    SparseMatrix off;

    [[nodiscard]] std::size_t states() const { return static_cast<std::size_t>(on.rows()); }
    /// Largest |row sum - 1| over both matrices.
    [[nodiscard]] double stochasticity_error() const;
};

[[nodiscard]] TransitionMatrices build_matrices(const ChainModel& model);

/// Distribution of a run length in slots, p[k] = P(T = k) for k = 0..size-1.
struct DurationPmf {
    std::vector<double> p;
    double truncated_mass = 0.0;  ///< probability dropped by truncation

    [[nodiscard]] static DurationPmf point(std::size_t k);
    [[nodiscard]] static DurationPmf uniform(std::size_t lo, std::size_t hi);
    /// Rounded log-normal run lengths (as generated by the channel module),
    /// truncated at `quantile` and renormalized.
    [[nodiscard]] static DurationPmf from_law(const channel::DurationLaw& law, double quantile = 0.999);

    [[nodiscard]] double mean() const;
    void validate() const;
};

struct StationaryDistribution {
    Eigen::VectorXd xi_on;
    Eigen::VectorXd xi_off;
    Eigen::VectorXd xi;
    Eigen::VectorXd nu;  ///< state distribution at the start of ON periods
    std::size_t iterations = 0;
    double residual = 0.0;
    double truncated_mass = 0.0;  ///< sum of both duration truncations
};

struct PowerIterationOptions {
    double tolerance = 1e-10;
    std::size_t max_iterations = 100000;
    /// After convergence, refine nu by a dense linear solve when the chain has
    /// at most this many states (0 disables). Differences of E[alpha] across
    /// thresholds can be far below the power-iteration residual.
    std::size_t polish_max_states = 3000;
};

/// Time-stationary distribution of the chain driven by alternating ON and OFF
/// periods with the given run-length laws.
[[nodiscard]] StationaryDistribution limiting_distribution(const TransitionMatrices& m, const DurationPmf& on,
                                                           const DurationPmf& off,
                                                           const PowerIterationOptions& opt = {});

struct RewardParams {
    double r = 1.0;
    double c = 1.0;
    double w = 0.0;
};

struct CurvePoint {
    std::size_t h = 0;
    double e_beta = 0.0;
    double e_alpha = 0.0;
    double e_gamma = 0.0;
    double psi = 0.0;  ///< undefined (NaN) at h = 0; +inf when E[alpha] does not grow
    double phi = 0.0;
    double objective = 0.0;
};

struct ThresholdCurve {
    std::vector<CurvePoint> points;  ///< h = 0..h_max
    RewardParams reward;
};

/// E[beta], E[alpha] (stationary mmWave service rate), E[gamma] for one threshold.
[[nodiscard]] CurvePoint evaluate_threshold(const ChainModel& model, const DurationPmf& on, const DurationPmf& off,
                                            const PowerIterationOptions& opt = {});

/// Evaluates every threshold 0..h_max (h_max <= q_max) on `base` with h replaced.
[[nodiscard]] ThresholdCurve threshold_curve(const ChainModel& base, std::size_t h_max, const DurationPmf& on,
                                             const DurationPmf& off, const RewardParams& reward,
                                             const PowerIterationOptions& opt = {});

/// Recomputes phi and the objective of a curve for other reward parameters.
[[nodiscard]] ThresholdCurve reprice(ThresholdCurve curve, const RewardParams& reward);

struct OptimalThreshold {
    std::size_t h = 0;
    bool saturated = false;
};

/// h* = the h with phi(h) < r + c <= phi(h + 1), phi(0) = -inf; the last
/// threshold with the saturation flag when no bracket exists.
[[nodiscard]] OptimalThreshold optimal_threshold(const ThresholdCurve& curve, double r, double c, double w);

/// Thresholds maximizing the objective (r+c)E[alpha] - (W+c)E[beta], up to `tol`.
[[nodiscard]] std::vector<std::size_t> objective_argmax(const ThresholdCurve& curve, double tol = 1e-12);

struct ValueIterationOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 2000000;
    double tie_tolerance = 1e-7;
};

struct ValueIterationResult {
    std::vector<bool> admit;  ///< per state index (q, d); true = admit to mmWave
    Eigen::VectorXd value;
    double gain = 0.0;
    std::size_t iterations = 0;
    double span = 0.0;
    std::vector<bool> reachable;  ///< under the returned policy from the empty queue
};

/// Relative value iteration for the average-reward MDP over (Q, D) with
/// service probability mu every slot, reward r per service, -c per renege and
/// W per arrival sent to RF. The arrival at Q = q_max always goes to RF; ties
/// resolve to RF.
[[nodiscard]] ValueIterationResult value_iteration(const ChainModel& model, const RewardParams& reward,
                                                   const ValueIterationOptions& opt = {});

enum class StateFilter {
    all,
    valid,      ///< drops (0, D > 0): an empty queue has no head-of-line wait
    reachable,  ///< states visited under the returned policy
};

/// True when, for every D, refusing at Q implies refusing at all Q' > Q
/// among the states kept by `filter`.
[[nodiscard]] bool monotone_in_q(const ChainModel& model, const ValueIterationResult& vi, StateFilter filter);

/// Per-D thresholds (smallest refused Q among kept states); nullopt for a D
/// with no kept state.
[[nodiscard]] std::vector<std::optional<std::size_t>> slice_thresholds(const ChainModel& model,
                                                                       const ValueIterationResult& vi,
                                                                       StateFilter filter);

/// The common threshold of all reachable slices, if the policy is a pure
/// Q-threshold on the reachable states.
[[nodiscard]] std::optional<std::size_t> extracted_threshold(const ChainModel& model, const ValueIterationResult& vi);

/// Q-only reading of a (Q, D) policy: Q is admitted when the policy admits on
/// at least half of Q's stationary mass; returns the smallest refused Q.
/// Solved densely, so limited to 5000 states.
[[nodiscard]] std::size_t induced_threshold(const ChainModel& model, const ValueIterationResult& vi);

}  // namespace mmsched::analysis
