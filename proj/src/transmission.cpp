#include "resotune/transmission.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>

#include "resotune/errors.hpp"
#include "resotune/units.hpp"

namespace resotune::transmission {

namespace {

using cplx = std::complex<double>;

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw ValidationError(field, what);
    }
}

// Independent engine per sweep point so draws depend only on (seed, index).
std::mt19937_64 point_engine(std::uint64_t seed, std::size_t index) {
    const auto idx = static_cast<std::uint64_t>(index);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
    return std::mt19937_64(seq);
}

struct Lineshape {
    cplx z;      // complex transmission
    cplx dz_df;  // derivative w.r.t. probe frequency
};

Lineshape lineshape(double f, double f_r, double Q_L, double Q_e, double phi) {
    const cplx coupling = (Q_L / Q_e) * std::polar(1.0, phi);
    const cplx g(1.0, 2.0 * Q_L * (f - f_r) / f_r);
    const cplx dg_df(0.0, 2.0 * Q_L / f_r);
    return {1.0 - coupling / g, coupling / (g * g) * dg_df};
}

}  // namespace

void SweepConfig::validate() const {
    require(std::isfinite(f_start) && f_start > 0.0, "f_start", "must be > 0");
    require(std::isfinite(f_stop) && f_start < f_stop, "f_stop", "must be > f_start");
    require(n_points >= 2, "n_points", "must be >= 2");
    require(std::isfinite(P_in_dBm), "P_in_dBm", "must be finite");
    require(std::isfinite(duration_s) && duration_s > 0.0, "duration_s", "must be > 0");
}

void SweepTrace::validate() const {
    require(frequencies.size() == power_ratio.size(), "power_ratio", "length differs from frequencies");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        require(std::isfinite(frequencies[i]), "frequencies", "must be finite");
        require(i == 0 || frequencies[i] > frequencies[i - 1], "frequencies", "must be strictly increasing");
        require(std::isfinite(power_ratio[i]) && power_ratio[i] >= 0.0, "power_ratio", "must be finite and >= 0");
    }
}

void NoiseModel::validate() const {
    require(std::isfinite(sigma_rel) && sigma_rel >= 0.0, "sigma_rel", "must be >= 0");
    require(std::isfinite(vib_amplitude) && vib_amplitude >= 0.0, "vib_amplitude", "must be >= 0");
}

void TlsLossModel::validate() const {
    require(std::isfinite(q_tls_low) && q_tls_low > 0.0, "q_tls_low", "must be > 0");
    require(std::isfinite(P_sat_dBm), "P_sat_dBm", "must be finite");
    require(std::isfinite(q_other) && q_other > 0.0, "q_other", "must be > 0");
}

double s21_power(double f, double f_r, double Q_L, double Q_e, double phi) {
    return std::norm(lineshape(f, f_r, Q_L, Q_e, phi).z);
}

double s21_power_slope(double f, double f_r, double Q_L, double Q_e, double phi) {
    const auto ls = lineshape(f, f_r, Q_L, Q_e, phi);
    return 2.0 * std::real(std::conj(ls.z) * ls.dz_df);
}

double loaded_q(double Q_i, double Q_e) {
    if (!(Q_i > 0.0) || !(Q_e > 0.0)) {
        throw DomainError("loaded_q: quality factors must be positive");
    }
    return 1.0 / (1.0 / Q_i + 1.0 / Q_e);
}

double internal_q(double Q_L, double Q_e) {
    if (!(Q_L > 0.0) || !(Q_e > 0.0)) {
        throw DomainError("internal_q: quality factors must be positive");
    }
    if (!(Q_L < Q_e)) {
        throw NonPhysicalFit("Q_L >= Q_e implies a non-positive internal loss");
    }
    return 1.0 / (1.0 / Q_L - 1.0 / Q_e);
}

double power_dependent_qi(double P_in_dBm, const TlsLossModel& tls) {
    const double saturation = units::dbm_to_watts(P_in_dBm) / units::dbm_to_watts(tls.P_sat_dBm);
    const double q_tls = tls.q_tls_low * std::sqrt(1.0 + saturation);
    return 1.0 / (1.0 / q_tls + 1.0 / tls.q_other);
}

model::ResonatorParams params_at_power(const model::ResonatorParams& params, const TlsLossModel& tls,
                                       double P_in_dBm) {
    auto out = params;
    out.Qi0 = power_dependent_qi(P_in_dBm, tls);
    return out;
}

double default_photon_kappa() {
    constexpr double anchor_dBm = -131.0;
    constexpr double anchor_f = 6.828e9;
    constexpr double anchor_QL = 32710.0;
    constexpr double anchor_Qe = 5e5;
    constexpr double anchor_photons = 11.0;
    static const double kappa = [] {
        const double omega = units::two_pi * anchor_f;
        return anchor_photons * units::kHbar * omega * omega * anchor_Qe /
               (anchor_QL * anchor_QL * units::dbm_to_watts(anchor_dBm));
    }();
    return kappa;
}

double photon_number(double P_in_dBm, double f_r, double Q_L, double Q_e, double kappa) {
    const double omega = units::two_pi * f_r;
    return kappa * (Q_L * Q_L / Q_e) * units::dbm_to_watts(P_in_dBm) / (units::kHbar * omega * omega);
}

double photon_number(double P_in_dBm, double f_r, double Q_L, double Q_e) {
    return photon_number(P_in_dBm, f_r, Q_L, Q_e, default_photon_kappa());
}

double input_chain_power(double source_dBm, std::span<const double> attenuators_db) {
    for (double a : attenuators_db) {
        if (!(a >= 0.0)) {
            throw DomainError("input_chain_power: attenuations must be >= 0 dB");
        }
    }
    return source_dBm - std::accumulate(attenuators_db.begin(), attenuators_db.end(), 0.0);
}

std::vector<double> sweep_frequencies(const SweepConfig& config) {
    config.validate();
    std::vector<double> f(config.n_points);
    const double step = (config.f_stop - config.f_start) / static_cast<double>(config.n_points - 1);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = config.f_start + static_cast<double>(i) * step;
    }
    f.back() = config.f_stop;
    return f;
}

SweepTrace synthesize_sweep(const SweepConfig& config, const model::ResonatorParams& params,
                            const model::TuningState& state, const model::PinCouplingModel& pin,
                            const NoiseModel& noise, double timestamp) {
    params.validate();
    pin.validate();
    state.validate(pin);
    noise.validate();

    const double f_r = model::tuned_frequency(params, state, pin);
    const double Q_L = loaded_q(params.Qi0, params.Qe);
    const double jitter = std::abs(model::tuning_slope(params, state, pin)) * noise.vib_amplitude;

    SweepTrace trace;
    trace.frequencies = sweep_frequencies(config);
    trace.power_ratio.resize(trace.frequencies.size());
    trace.P_in_dBm = config.P_in_dBm;
    trace.timestamp = timestamp;

    const bool noisy = jitter > 0.0 || noise.sigma_rel > 0.0;
    for (std::size_t i = 0; i < trace.frequencies.size(); ++i) {
        double offset = 0.0;
        double gain = 1.0;
        if (noisy) {
            auto eng = point_engine(noise.seed, i);
            std::uniform_real_distribution<double> phase(0.0, 1.0);
            std::normal_distribution<double> gauss(0.0, 1.0);
            offset = jitter * std::sin(units::two_pi * phase(eng));
            gain = 1.0 + noise.sigma_rel * gauss(eng);
        }
        const double p = s21_power(trace.frequencies[i], f_r + offset, Q_L, params.Qe, params.phi) * gain;
        trace.power_ratio[i] = p > 0.0 ? p : 0.0;
    }
    return trace;
}

}  // namespace resotune::transmission
