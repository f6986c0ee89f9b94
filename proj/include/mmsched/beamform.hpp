#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mmsched::beamform {

using cdouble = std::complex<double>;

/// Uniform linear array; angles are measured from broadside in degrees.
struct ArrayGeometry {
    std::size_t n_elements = 4;
    double spacing = 0.5;       ///< element spacing in wavelengths
    double carrier_ghz = 2.4;   ///< label only

    void validate() const;
    /// a(theta)_n = exp(j 2 pi spacing n sin(theta)), n = 0..N-1.
    [[nodiscard]] Eigen::VectorXcd steering(double angle_deg) const;
};

struct Source {
    double angle_deg = 0.0;
    double power = 1.0;
};

/// n_elements x n_snapshots complex baseband samples.
struct Snapshots {
    Eigen::MatrixXcd data;

    [[nodiscard]] std::size_t n_elements() const { return static_cast<std::size_t>(data.rows()); }
    [[nodiscard]] std::size_t n_snapshots() const { return static_cast<std::size_t>(data.cols()); }
    /// Sample covariance Y Y^H / n_snapshots.
    [[nodiscard]] Eigen::MatrixXcd covariance() const;
};

/// Narrowband plane waves with independent circular Gaussian symbols plus
/// white noise of power `noise_power`. Deterministic per seed.
[[nodiscard]] Snapshots synth_snapshots(const ArrayGeometry& geometry, const std::vector<Source>& sources,
                                        double noise_power, std::size_t n_snapshots, std::uint64_t seed);

struct AngleGrid {
    double lo_deg = -90.0;
    double hi_deg = 90.0;
    double step_deg = 1.0;

    void validate() const;
    [[nodiscard]] std::vector<double> angles() const;
};

struct AngularSpectrum {
    std::vector<double> angles_deg;
    std::vector<double> values;

    /// Angle of the largest value; ties go to the smallest angle.
    [[nodiscard]] double peak_angle() const;
    /// Local maxima sorted by value, strongest first.
    [[nodiscard]] std::vector<double> peaks(std::size_t count) const;
    /// Peak-to-average ratio of the values, in dB.
    [[nodiscard]] double papr_db() const;
};

struct MusicResult {
    AngularSpectrum spectrum;
    double a_rf = 0.0;              ///< top-peak angle
    bool ill_conditioned = false;   ///< fewer snapshots than elements
};

/// MUSIC pseudo-spectrum 1 / ||E_n^H a(theta)||^2 with E_n the noise subspace
/// of the sample covariance.
[[nodiscard]] MusicResult music_spectrum(const Snapshots& snapshots, std::size_t n_sources,
                                         const ArrayGeometry& geometry, const AngleGrid& grid = {});

/// SNR-maximizing receive steering: argmax over the grid of
/// w^H R w / N_0 with w = a(theta) / sqrt(N), R the received covariance.
/// Values within a relative 1e-12 of the best count as ties, resolved to the
/// smallest angle.
[[nodiscard]] double rf_steer(const Eigen::MatrixXcd& covariance, double noise_power, const ArrayGeometry& geometry,
                              const AngleGrid& grid = {});
/// As above with R = H K_xx H^H.
[[nodiscard]] double rf_steer(const Eigen::MatrixXcd& h_rf, const Eigen::MatrixXcd& k_xx, double noise_power,
                              const ArrayGeometry& geometry, const AngleGrid& grid = {});
/// The objective of rf_steer over the whole grid (the Bartlett spectrum).
[[nodiscard]] AngularSpectrum steering_spectrum(const Eigen::MatrixXcd& covariance, double noise_power,
                                                const ArrayGeometry& geometry, const AngleGrid& grid = {});

struct Path {
    double aoa_deg = 0.0;
    double aod_deg = 0.0;
    double power = 1.0;
    double phase_rad = 0.0;
};

struct MmChannel {
    Eigen::MatrixXcd h;  ///< n_r x n_t
    ArrayGeometry rx{8, 0.5, 60.0};
    ArrayGeometry tx{8, 0.5, 60.0};
    std::optional<double> true_aoa_deg;

    /// Singular values, descending.
    [[nodiscard]] Eigen::VectorXd singular_values() const;
    /// Dominant right singular vector, the transmit beam.
    [[nodiscard]] Eigen::VectorXcd transmit_beam() const;
};

/// H = sum_p sqrt(power) e^{j phase} a_r(aoa) a_t(aod)^H. Receiver offset
/// (dx, dy) in wavelengths shifts each path's phase by
/// 2 pi (dx sin(aoa) + dy cos(aoa)).
[[nodiscard]] MmChannel synth_mm_channel(const std::vector<Path>& paths, const ArrayGeometry& rx,
                                         const ArrayGeometry& tx, double dx = 0.0, double dy = 0.0);

struct SweepResult {
    double best_angle_deg = 0.0;
    double gain = 0.0;  ///< |w_r^H H w_t|^2
    std::size_t probes = 0;
};

/// Probe angles lo, lo + step, ... and hi itself: ceil((hi - lo) / step) + 1
/// directions. The window must lie in [-90, 90]; an empty window or a
/// non-positive step is a parameter error.
[[nodiscard]] std::vector<double> sweep_angles(double lo_deg, double hi_deg, double step_deg);

/// Intersection of [center - half_width, center + half_width] with [-90, 90].
[[nodiscard]] std::pair<double, double> clip_window(double center_deg, double half_width_deg);

/// Receive-beam sweep with w_t the dominant transmit mode and
/// w_r(theta) = a_r(theta) / sqrt(n_r). Ties go to the first probed angle.
[[nodiscard]] SweepResult mm_sweep(const MmChannel& channel, double lo_deg, double hi_deg, double step_deg);
/// Gain of fixed beams on a channel.
[[nodiscard]] double beam_gain(const MmChannel& channel, double rx_angle_deg, const Eigen::VectorXcd& w_t);

struct ModeInfo {
    double rho1 = 0.0;
    double ratio = 0.0;  ///< rho1^2 / sum rho_i^2
};

[[nodiscard]] ModeInfo dominant_mode(const Eigen::MatrixXcd& h);

struct LosThresholds {
    double papr_db = 6.0;
    double cv = 0.2;
};

enum class LinkClass { los, nlos };

struct LosResult {
    LinkClass decision = LinkClass::nlos;
    double papr_db = 0.0;
    double cv = 0.0;
    /// Normalized margin of the deciding indicator, clamped to [0, 1]: the
    /// smaller margin for LOS, the larger violation for NLOS.
    double confidence = 0.0;
};

/// LOS iff the spectrum's PAPR >= papr threshold and the coefficient of
/// variation of the perturbed gains <= cv threshold.
[[nodiscard]] LosResult los_detect(const std::vector<double>& gains, const AngularSpectrum& spectrum,
                                   const LosThresholds& thresholds = {});

enum class Mode { rf_only, dual };

[[nodiscard]] std::string to_string(Mode mode);
[[nodiscard]] std::string to_string(LinkClass c);

/// Dual mode iff LOS was detected around the RF-assisted direction.
[[nodiscard]] Mode hybrid_mode(double a_rf_deg, LinkClass los);

/// A synthetic environment shared by the RF and mmWave bands.
struct Scene {
    std::vector<Path> paths;
    double snr_db = 20.0;  ///< strongest path power over noise power at the RF array
    std::size_t n_snapshots = 200;
    ArrayGeometry rf{4, 0.5, 2.4};
    ArrayGeometry mm_rx{8, 0.5, 60.0};
    ArrayGeometry mm_tx{8, 0.5, 60.0};
    std::optional<double> true_aoa_deg;

    void validate() const;
};

/// One line-of-sight path at `aoa_deg`, plus `n_scatter` weak paths whose
/// total power is `scatter_gap_db` below it. Departure angles and phases are
/// drawn from the seed.
[[nodiscard]] Scene los_scene(double aoa_deg, double snr_db, std::uint64_t seed, std::size_t n_scatter = 0,
                              double scatter_gap_db = 10.0);
/// No line of sight: two reflections of equal power, `separation_deg` apart in
/// both arrival and departure angle.
[[nodiscard]] Scene reflector_scene(double center_deg, double separation_deg, double snr_db, std::uint64_t seed);

struct BeamformConfig {
    AngleGrid rf_grid{-90.0, 90.0, 1.0};
    double mm_step_deg = 10.0;
    double window_half_width_deg = 10.0;
    std::size_t n_sources = 1;
    LosThresholds thresholds;
    std::size_t n_perturbations = 16;
    double perturb_radius = 2.0;  ///< wavelengths
    bool baseline_sweep = true;

    void validate() const;
};

struct PipelineResult {
    MusicResult music;
    double theta_rf = 0.0;
    SweepResult constrained;
    std::optional<SweepResult> baseline;
    std::vector<double> perturbed_gains;
    LosResult los;
    Mode mode = Mode::rf_only;
};

/// RF AoA estimate, constrained mmWave sweep around it, LOS check, mode.
[[nodiscard]] PipelineResult run_pipeline(const Scene& scene, const BeamformConfig& config, std::uint64_t seed);

void write_spectrum_csv(std::ostream& out, const AngularSpectrum& spectrum);
void write_summary_json(std::ostream& out, const PipelineResult& result);

}  // namespace mmsched::beamform
