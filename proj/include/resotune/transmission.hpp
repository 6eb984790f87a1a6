#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resotune/resonator_model.hpp"

// Forward model of the notch-port transmission measured on the VNA.
namespace resotune::transmission {

struct SweepConfig {
    double f_start = 0.0;  ///< Hz
    double f_stop = 0.0;   ///< Hz
    std::size_t n_points = 1601;
    double P_in_dBm = -131.0;  ///< power at the resonator
    double duration_s = 160.0;

    void validate() const;
};

struct SweepTrace {
    std::vector<double> frequencies;  ///< Hz, strictly increasing
    std::vector<double> power_ratio;  ///< P_out / P_in
    double P_in_dBm = -131.0;
    double timestamp = 0.0;  ///< seconds since session start

    [[nodiscard]] std::size_t size() const { return frequencies.size(); }
    void validate() const;
};

struct NoiseModel {
    double sigma_rel = 0.0;      ///< relative Gaussian noise on the power ratio
    double vib_amplitude = 0.0;  ///< pin vibration amplitude, meters
    std::uint64_t seed = 0;

    void validate() const;
};

/// Saturable two-level-system loss: 1/Q_i = 1/(q_tls_low sqrt(1 + P/P_sat)) + 1/q_other.
struct TlsLossModel {
    double q_tls_low = 50000.0;
    double P_sat_dBm = -110.0;
    double q_other = 350000.0 / 3.0;  // with q_tls_low this gives Q_i = 35000 at low power

    void validate() const;
};

/// |1 - (Q_L/Q_e) e^{i phi} / (1 + 2i Q_L (f - f_r)/f_r)|^2
double s21_power(double f, double f_r, double Q_L, double Q_e, double phi);

/// d s21_power / d f, in 1/Hz.
double s21_power_slope(double f, double f_r, double Q_L, double Q_e, double phi);

double loaded_q(double Q_i, double Q_e);

/// Inverse of loaded_q. Throws NonPhysicalFit when Q_L >= Q_e.
double internal_q(double Q_L, double Q_e);

double power_dependent_qi(double P_in_dBm, const TlsLossModel& tls);

/// Copy of `params` with the internal Q replaced by the TLS-limited value at `P_in_dBm`.
model::ResonatorParams params_at_power(const model::ResonatorParams& params, const TlsLossModel& tls,
                                       double P_in_dBm);

/// Calibration constant that maps -131 dBm at 6.828 GHz (Q_L = 32710, Q_e = 5e5) to 11 photons.
double default_photon_kappa();

/// Mean stored photon number: kappa (Q_L^2/Q_e) P / (hbar omega_r^2).
double photon_number(double P_in_dBm, double f_r, double Q_L, double Q_e, double kappa);
double photon_number(double P_in_dBm, double f_r, double Q_L, double Q_e);

/// Source power minus the cold attenuation stages.
double input_chain_power(double source_dBm, std::span<const double> attenuators_db);

/// Evenly spaced grid from f_start to f_stop inclusive.
std::vector<double> sweep_frequencies(const SweepConfig& config);

/// Emulates one VNA sweep of the tuned resonator.
///
/// Each point sees the resonance displaced by an arcsine-distributed offset of
/// amplitude |df/dd| * vib_amplitude (a sinusoidally vibrating pin sampled at a
/// random phase), then multiplicative Gaussian noise of width sigma_rel. Draws
/// are keyed on (seed, point index), so the result does not depend on the
/// order points are evaluated in.
SweepTrace synthesize_sweep(const SweepConfig& config, const model::ResonatorParams& params,
                            const model::TuningState& state, const model::PinCouplingModel& pin,
                            const NoiseModel& noise, double timestamp = 0.0);

}  // namespace resotune::transmission
