#include "mmsched/beamform.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

#include <json.hpp>

#include "mmsched/error.hpp"
#include "mmsched/random.hpp"

namespace mmsched::beamform {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRelTie = 1e-12;

double deg2rad(double deg) { return deg * kPi / 180.0; }

// Index of the largest value; later values must beat the best by a relative
// margin, so near-ties keep the earliest index.
std::size_t argmax_first(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best] + kRelTie * std::abs(v[best])) best = i;
    return best;
}

cdouble circular_normal(Rng& rng, double power) {
    std::normal_distribution<double> n(0.0, std::sqrt(power / 2.0));
    double re = n(rng);
    double im = n(rng);
    return {re, im};
}

}  // namespace

void ArrayGeometry::validate() const {
    if (n_elements < 2) throw ParameterError("array needs at least 2 elements");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ParameterError("element spacing must be positive");
}

Eigen::VectorXcd ArrayGeometry::steering(double angle_deg) const {
    Eigen::VectorXcd a(static_cast<Eigen::Index>(n_elements));
    const double k = 2.0 * kPi * spacing * std::sin(deg2rad(angle_deg));
    for (std::size_t n = 0; n < n_elements; ++n) a(static_cast<Eigen::Index>(n)) = std::polar(1.0, k * n);
    return a;
}

Eigen::MatrixXcd Snapshots::covariance() const {
    if (data.cols() == 0) throw ParameterError("no snapshots");
    return data * data.adjoint() / static_cast<double>(data.cols());
}

Snapshots synth_snapshots(const ArrayGeometry& geometry, const std::vector<Source>& sources, double noise_power,
                          std::size_t n_snapshots, std::uint64_t seed) {
    geometry.validate();
    if (sources.size() >= geometry.n_elements)
        throw ParameterError("rank: source count must be below the element count");
    if (!(noise_power >= 0.0)) throw ParameterError("noise power must be non-negative");
    if (n_snapshots == 0) throw ParameterError("need at least one snapshot");
    for (const auto& s : sources)
        if (!(s.power >= 0.0)) throw ParameterError("source power must be non-negative");

    Rng rng = make_rng(seed, Stream::scene);
    const auto n = static_cast<Eigen::Index>(geometry.n_elements);
    Snapshots out;
    out.data = Eigen::MatrixXcd::Zero(n, static_cast<Eigen::Index>(n_snapshots));
    std::vector<Eigen::VectorXcd> steer;
    for (const auto& s : sources) steer.push_back(geometry.steering(s.angle_deg));
    for (Eigen::Index t = 0; t < out.data.cols(); ++t) {
        for (std::size_t k = 0; k < sources.size(); ++k) out.data.col(t) += steer[k] * circular_normal(rng, sources[k].power);
        if (noise_power > 0.0)
            for (Eigen::Index i = 0; i < n; ++i) out.data(i, t) += circular_normal(rng, noise_power);
    }
    return out;
}

void AngleGrid::validate() const {
    if (!(step_deg > 0.0)) throw ParameterError("grid step must be positive");
    if (!(hi_deg > lo_deg)) throw ParameterError("grid range is empty");
    const double cells = (hi_deg - lo_deg) / step_deg;
    if (std::abs(cells - std::round(cells)) > 1e-9) throw ParameterError("grid step must divide the scan range");
}

std::vector<double> AngleGrid::angles() const {
    validate();
    const auto cells = static_cast<std::size_t>(std::llround((hi_deg - lo_deg) / step_deg));
    std::vector<double> out(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) out[i] = lo_deg + step_deg * static_cast<double>(i);
    out.back() = hi_deg;
    return out;
}

double AngularSpectrum::peak_angle() const {
    if (values.empty()) throw ParameterError("empty spectrum");
    return angles_deg[argmax_first(values)];
}

std::vector<double> AngularSpectrum::peaks(std::size_t count) const {
    std::vector<std::size_t> idx;
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        const bool left = i == 0 || values[i] > values[i - 1];
        const bool right = i + 1 == n || values[i] >= values[i + 1];
        if (left && right) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::vector<double> out;
    for (std::size_t i = 0; i < idx.size() && i < count; ++i) out.push_back(angles_deg[idx[i]]);
    return out;
}

double AngularSpectrum::papr_db() const {
    if (values.empty()) throw ParameterError("empty spectrum");
    double sum = 0.0, peak = 0.0;
    for (double v : values) {
        sum += v;
        peak = std::max(peak, v);
    }
    const double mean = sum / static_cast<double>(values.size());
    if (!(mean > 0.0)) return 0.0;
    return 10.0 * std::log10(peak / mean);
}

MusicResult music_spectrum(const Snapshots& snapshots, std::size_t n_sources, const ArrayGeometry& geometry,
                           const AngleGrid& grid) {
    geometry.validate();
    if (snapshots.n_elements() != geometry.n_elements) throw ParameterError("snapshot rows do not match the array");
    if (n_sources >= geometry.n_elements) throw ParameterError("rank: assumed source count must be below the element count");

    MusicResult out;
    out.ill_conditioned = snapshots.n_snapshots() < snapshots.n_elements();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(snapshots.covariance());
    if (es.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed", 0.0);
    // Eigenvalues ascend, so the noise subspace is the leading block.
    const auto noise_dim = static_cast<Eigen::Index>(geometry.n_elements - n_sources);
    const Eigen::MatrixXcd en = es.eigenvectors().leftCols(noise_dim);

    out.spectrum.angles_deg = grid.angles();
    const double floor = 1e-15 * static_cast<double>(geometry.n_elements);
    for (double theta : out.spectrum.angles_deg) {
        const double d = (en.adjoint() * geometry.steering(theta)).squaredNorm();
        out.spectrum.values.push_back(1.0 / std::max(d, floor));
    }
    out.a_rf = out.spectrum.peak_angle();
    return out;
}

AngularSpectrum steering_spectrum(const Eigen::MatrixXcd& covariance, double noise_power,
                                  const ArrayGeometry& geometry, const AngleGrid& grid) {
    geometry.validate();
    const auto n = static_cast<Eigen::Index>(geometry.n_elements);
    if (covariance.rows() != n || covariance.cols() != n) throw ParameterError("covariance does not match the array");
    if (!(noise_power > 0.0)) throw ParameterError("noise power must be positive");
    AngularSpectrum out;
    out.angles_deg = grid.angles();
    for (double theta : out.angles_deg) {
        const Eigen::VectorXcd w = geometry.steering(theta) / std::sqrt(static_cast<double>(n));
        out.values.push_back((w.adjoint() * covariance * w)(0).real() / noise_power);
    }
    return out;
}

double rf_steer(const Eigen::MatrixXcd& covariance, double noise_power, const ArrayGeometry& geometry,
                const AngleGrid& grid) {
    return steering_spectrum(covariance, noise_power, geometry, grid).peak_angle();
}

double rf_steer(const Eigen::MatrixXcd& h_rf, const Eigen::MatrixXcd& k_xx, double noise_power,
                const ArrayGeometry& geometry, const AngleGrid& grid) {
    if (h_rf.cols() != k_xx.rows() || k_xx.rows() != k_xx.cols())
        throw ParameterError("H_RF and K_xx dimensions do not agree");
    return rf_steer(Eigen::MatrixXcd(h_rf * k_xx * h_rf.adjoint()), noise_power, geometry, grid);
}

Eigen::VectorXd MmChannel::singular_values() const {
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(h).singularValues();
}

Eigen::VectorXcd MmChannel::transmit_beam() const {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeThinV);
    return svd.matrixV().col(0);
}

MmChannel synth_mm_channel(const std::vector<Path>& paths, const ArrayGeometry& rx, const ArrayGeometry& tx, double dx,
                           double dy) {
    rx.validate();
    tx.validate();
    MmChannel ch;
    ch.rx = rx;
    ch.tx = tx;
    ch.h = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(rx.n_elements), static_cast<Eigen::Index>(tx.n_elements));
    for (const auto& p : paths) {
        if (!(p.power >= 0.0)) throw ParameterError("path power must be non-negative");
        const double a = deg2rad(p.aoa_deg);
        const double shift = 2.0 * kPi * (dx * std::sin(a) + dy * std::cos(a));
        const cdouble g = std::polar(std::sqrt(p.power), p.phase_rad + shift);
        ch.h += g * rx.steering(p.aoa_deg) * tx.steering(p.aod_deg).adjoint();
    }
    return ch;
}

std::vector<double> sweep_angles(double lo_deg, double hi_deg, double step_deg) {
    if (!(step_deg > 0.0)) throw ParameterError("sweep step must be positive");
    if (!(lo_deg <= hi_deg)) throw ParameterError("sweep window is empty");
    if (lo_deg < -90.0 - 1e-9 || hi_deg > 90.0 + 1e-9) throw ParameterError("sweep window outside [-90, 90]");
    const double cells = (hi_deg - lo_deg) / step_deg;
    const auto n = static_cast<std::size_t>(std::ceil(cells - 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i + 1 < n; ++i) out[i] = lo_deg + step_deg * static_cast<double>(i);
    out.back() = hi_deg;
    return out;
}

std::pair<double, double> clip_window(double center_deg, double half_width_deg) {
    if (!(half_width_deg >= 0.0)) throw ParameterError("window half-width must be non-negative");
    const double lo = std::max(-90.0, center_deg - half_width_deg);
    const double hi = std::min(90.0, center_deg + half_width_deg);
    if (lo > hi) throw ParameterError("sweep window is empty");
    return {lo, hi};
}

double beam_gain(const MmChannel& channel, double rx_angle_deg, const Eigen::VectorXcd& w_t) {
    const Eigen::VectorXcd w_r =
        channel.rx.steering(rx_angle_deg) / std::sqrt(static_cast<double>(channel.rx.n_elements));
    return std::norm((w_r.adjoint() * channel.h * w_t)(0));
}

SweepResult mm_sweep(const MmChannel& channel, double lo_deg, double hi_deg, double step_deg) {
    const auto angles = sweep_angles(lo_deg, hi_deg, step_deg);
    const Eigen::VectorXcd w_t = channel.transmit_beam();
    std::vector<double> gains;
    for (double a : angles) gains.push_back(beam_gain(channel, a, w_t));
    const std::size_t best = argmax_first(gains);
    return {angles[best], gains[best], angles.size()};
}

ModeInfo dominant_mode(const Eigen::MatrixXcd& h) {
    if (h.size() == 0 || h.cwiseAbs().maxCoeff() == 0.0) throw ParameterError("degenerate channel: all-zero matrix");
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXcd>(h).singularValues();
    return {s(0), s(0) * s(0) / s.squaredNorm()};
}

LosResult los_detect(const std::vector<double>& gains, const AngularSpectrum& spectrum,
                     const LosThresholds& thresholds) {
    if (gains.size() < 2) throw ParameterError("need at least 2 perturbation samples");
    LosResult out;
    out.papr_db = spectrum.papr_db();
    double mean = 0.0;
    for (double g : gains) mean += g;
    mean /= static_cast<double>(gains.size());
    double var = 0.0;
    for (double g : gains) var += (g - mean) * (g - mean);
    var /= static_cast<double>(gains.size());
    out.cv = mean > 0.0 ? std::sqrt(var) / mean : std::numeric_limits<double>::infinity();

    const bool papr_ok = out.papr_db >= thresholds.papr_db;
    const bool cv_ok = out.cv <= thresholds.cv;
    out.decision = papr_ok && cv_ok ? LinkClass::los : LinkClass::nlos;

    const double m_papr = (out.papr_db - thresholds.papr_db) / std::max(std::abs(thresholds.papr_db), 1.0);
    const double m_cv = thresholds.cv > 0.0 ? (thresholds.cv - out.cv) / thresholds.cv : (cv_ok ? 1.0 : -1.0);
    const double margin = out.decision == LinkClass::los ? std::min(m_papr, m_cv) : std::max(-m_papr, -m_cv);
    out.confidence = std::isfinite(margin) ? std::clamp(margin, 0.0, 1.0) : 1.0;
    return out;
}

std::string to_string(Mode mode) { return mode == Mode::dual ? "dual" : "rf_only"; }
std::string to_string(LinkClass c) { return c == LinkClass::los ? "los" : "nlos"; }

Mode hybrid_mode(double a_rf_deg, LinkClass los) {
    if (!std::isfinite(a_rf_deg)) throw ParameterError("A_RF must be finite");
    return los == LinkClass::los ? Mode::dual : Mode::rf_only;
}

void Scene::validate() const {
    rf.validate();
    mm_rx.validate();
    mm_tx.validate();
    if (paths.empty()) throw ParameterError("scene has no paths");
    if (paths.size() >= rf.n_elements) throw ParameterError("rank: more paths than the RF array resolves");
    if (n_snapshots == 0) throw ParameterError("need at least one snapshot");
    if (!std::isfinite(snr_db)) throw ParameterError("snr must be finite");
    for (const auto& p : paths) {
        if (!(p.power > 0.0)) throw ParameterError("path power must be positive");
        if (std::abs(p.aoa_deg) > 90.0) throw ParameterError("path angle outside [-90, 90]");
    }
}

Scene los_scene(double aoa_deg, double snr_db, std::uint64_t seed, std::size_t n_scatter, double scatter_gap_db) {
    Rng rng = make_rng(seed, Stream::scene);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    Scene s;
    s.snr_db = snr_db;
    s.true_aoa_deg = aoa_deg;
    s.paths.push_back({aoa_deg, uniform(-60.0, 60.0), 1.0, uniform(0.0, 2.0 * kPi)});
    const double each = std::pow(10.0, -scatter_gap_db / 10.0) / static_cast<double>(std::max<std::size_t>(n_scatter, 1));
    for (std::size_t i = 0; i < n_scatter; ++i)
        s.paths.push_back({uniform(-90.0, 90.0), uniform(-60.0, 60.0), each, uniform(0.0, 2.0 * kPi)});
    return s;
}

Scene reflector_scene(double center_deg, double separation_deg, double snr_db, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::scene);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    Scene s;
    s.snr_db = snr_db;
    // Nearby reflectors: both departure and arrival angles are close.
    const double aod = uniform(-60.0, 60.0);
    for (double side : {-0.5, 0.5})
        s.paths.push_back({center_deg + side * separation_deg, aod - side * separation_deg, 1.0,
                           uniform(0.0, 2.0 * kPi)});
    return s;
}

void BeamformConfig::validate() const {
    rf_grid.validate();
    if (!(mm_step_deg > 0.0)) throw ParameterError("mmWave sweep step must be positive");
    if (!(window_half_width_deg >= 0.0)) throw ParameterError("window half-width must be non-negative");
    if (n_perturbations < 2) throw ParameterError("need at least 2 perturbations");
    if (!(perturb_radius >= 0.0)) throw ParameterError("perturbation radius must be non-negative");
}

PipelineResult run_pipeline(const Scene& scene, const BeamformConfig& config, std::uint64_t seed) {
    scene.validate();
    config.validate();
    double strongest = 0.0;
    std::vector<Source> sources;
    for (const auto& p : scene.paths) {
        sources.push_back({p.aoa_deg, p.power});
        strongest = std::max(strongest, p.power);
    }
    const double noise = strongest * std::pow(10.0, -scene.snr_db / 10.0);

    PipelineResult out;
    const Snapshots snaps = synth_snapshots(scene.rf, sources, noise, scene.n_snapshots, seed);
    out.music = music_spectrum(snaps, config.n_sources, scene.rf, config.rf_grid);
    out.theta_rf = rf_steer(snaps.covariance(), noise > 0.0 ? noise : 1.0, scene.rf, config.rf_grid);

    const MmChannel mm = synth_mm_channel(scene.paths, scene.mm_rx, scene.mm_tx);
    const auto [lo, hi] = clip_window(out.music.a_rf, config.window_half_width_deg);
    out.constrained = mm_sweep(mm, lo, hi, config.mm_step_deg);
    if (config.baseline_sweep) out.baseline = mm_sweep(mm, -90.0, 90.0, config.mm_step_deg);

    // Beams stay fixed while the receiver moves slightly.
    const Eigen::VectorXcd w_t = mm.transmit_beam();
    Rng rng = make_rng(seed, Stream::perturb);
    for (std::size_t k = 0; k < config.n_perturbations; ++k) {
        const double dx = config.perturb_radius * (2.0 * uniform01(rng) - 1.0);
        const double dy = config.perturb_radius * (2.0 * uniform01(rng) - 1.0);
        const MmChannel moved = synth_mm_channel(scene.paths, scene.mm_rx, scene.mm_tx, dx, dy);
        out.perturbed_gains.push_back(beam_gain(moved, out.constrained.best_angle_deg, w_t));
    }
    out.los = los_detect(out.perturbed_gains, out.music.spectrum, config.thresholds);
    out.mode = hybrid_mode(out.music.a_rf, out.los.decision);
    return out;
}

void write_spectrum_csv(std::ostream& out, const AngularSpectrum& spectrum) {
    out << "angle_deg,value\n";
    char buf[64];
    for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", spectrum.angles_deg[i], spectrum.values[i]);
        out << buf;
    }
}

void write_summary_json(std::ostream& out, const PipelineResult& r) {
    nlohmann::ordered_json j;
    j["a_rf"] = r.music.a_rf;
    j["theta_rf"] = r.theta_rf;
    j["theta_mm"] = r.constrained.best_angle_deg;
    j["gain"] = r.constrained.gain;
    j["probes"] = r.constrained.probes;
    if (r.baseline) {
        j["baseline_theta_mm"] = r.baseline->best_angle_deg;
        j["baseline_gain"] = r.baseline->gain;
        j["baseline_probes"] = r.baseline->probes;
    }
    j["papr_db"] = r.los.papr_db;
    if (std::isfinite(r.los.cv))
        j["cv"] = r.los.cv;
    else
        j["cv"] = nullptr;
    j["los"] = r.los.decision == LinkClass::los;
    j["confidence"] = r.los.confidence;
    j["mode"] = to_string(r.mode);
    j["ill_conditioned"] = r.music.ill_conditioned;
    out << j.dump() << '\n';
}

}  // namespace mmsched::beamform
