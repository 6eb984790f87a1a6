#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace resotune::stability {

struct FrequencyTimeSeries {
    std::vector<double> timestamps;  ///< seconds, strictly increasing
    std::vector<double> f_r;         ///< Hz
    double f0 = 0.0;                 ///< reference frequency for fractional units, Hz

    [[nodiscard]] std::size_t size() const { return timestamps.size(); }
    void validate() const;
};

struct DriftRate {
    double slope_hz_per_hour = 0.0;
    double ppb_per_hour = 0.0;
};

/// Ordinary least-squares slope of f_r against time.
DriftRate drift_rate(const FrequencyTimeSeries& series);

double peak_to_peak_deviation(const FrequencyTimeSeries& series);

struct Oscillation {
    double frequency_hz = 0.0;  ///< modulation frequency
    double amplitude = 0.0;     ///< sinusoid amplitude, in Hz of resonance-frequency jitter
    double snr = 0.0;           ///< peak periodogram power over the median-estimated noise level
};

/// Dominant sinusoidal modulation of uniformly sampled data (>= 64 samples).
///
/// A periodogram picks the strongest non-DC bin; frequency and amplitude are
/// then refined by a least-squares sinusoid fit around that bin. The returned
/// amplitude is the sample amplitude times `hz_per_unit`. Throws NoOscillation
/// when the peak does not clear a 1e-3 false-alarm threshold.
Oscillation detect_oscillation(std::span<const double> samples, double sample_interval, double hz_per_unit = 1.0);

/// Oscillation of a resonance-frequency series (amplitude in Hz).
Oscillation detect_oscillation(const FrequencyTimeSeries& series);

/// Oscillation in repeated power-ratio samples at a fixed probe frequency,
/// converted to equivalent resonance jitter through the lineshape slope there.
Oscillation detect_s21_oscillation(std::span<const double> power_ratio, double sample_interval, double probe_f,
                                   double f_r, double Q_L, double Q_e, double phi);

struct AllanPoint {
    double tau_s = 0.0;
    double deviation = 0.0;  ///< fractional (dimensionless)
};

/// Overlapping Allan deviation of f_r/f0 at octave-spaced averaging times.
/// Not a figure the drift bound depends on; reported as an extra metric.
std::vector<AllanPoint> allan_deviation(const FrequencyTimeSeries& series);

/// Samples every `cadence_s` over [0, duration_s], drifting linearly by `total_drift_hz`.
FrequencyTimeSeries linear_drift_series(double f0, double total_drift_hz, double duration_s, double cadence_s);

/// Mean-reverting random walk (correlation time `correlation_s`) clipped to a
/// peak-to-peak window of `bound_pp_hz` around f0.
FrequencyTimeSeries bounded_walk_series(double f0, double bound_pp_hz, double duration_s, double cadence_s,
                                        double correlation_s, std::uint64_t seed);

}  // namespace resotune::stability
