#include "resotune/resonator_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "resotune/errors.hpp"
#include "resotune/units.hpp"

namespace resotune::model {

namespace {

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw ValidationError(field, what);
    }
}

// (1 - m^2)^(-3/2), the factor relating d(1/sqrt(1 - m^2)) to m dm.
double screening_gain(double m) {
    const double s = 1.0 - m * m;
    return 1.0 / (s * std::sqrt(s));
}

double unscreened_frequency(const ResonatorParams& params, double trim_shift) {
    const double f = params.bare_frequency() + trim_shift;
    if (!(f > 0.0)) {
        throw DomainError("trim shift drives the resonance to a non-positive frequency");
    }
    return f;
}

}  // namespace

void ResonatorParams::validate() const {
    require(std::isfinite(L0) && L0 > 0.0, "L0", "must be > 0");
    require(std::isfinite(C) && C > 0.0, "C", "must be > 0");
    require(std::isfinite(Qi0) && Qi0 > 0.0, "Qi0", "must be > 0");
    require(std::isfinite(Qe) && Qe > 0.0, "Qe", "must be > 0");
    require(std::isfinite(phi) && std::abs(phi) < std::numbers::pi / 2.0, "phi",
            "must satisfy |phi| < pi/2");
}

double ResonatorParams::bare_frequency() const { return resonance_frequency(L0, C); }

ResonatorParams ResonatorParams::from_frequency(double frequency, double L0, double Qi0, double Qe,
                                                double phi) {
    if (!(frequency > 0.0) || !(L0 > 0.0)) {
        throw DomainError("from_frequency: frequency and L0 must be positive");
    }
    const double omega = units::two_pi * frequency;
    ResonatorParams p;
    p.L0 = L0;
    p.C = 1.0 / (omega * omega * L0);
    p.Qi0 = Qi0;
    p.Qe = Qe;
    p.phi = phi;
    return p;
}

void PinCouplingModel::validate() const {
    require(std::isfinite(m_max) && m_max >= 0.0 && m_max < 1.0, "m_max", "must satisfy 0 <= m_max < 1");
    require(std::isfinite(lambda) && lambda > 0.0, "lambda", "must be > 0");
    require(std::isfinite(d_min) && d_min > 0.0, "d_min", "must be > 0");
}

void TuningState::validate(const PinCouplingModel& pin) const {
    require(std::isfinite(d) && d >= pin.d_min, "d", "must be >= d_min of the pin model");
    require(std::isfinite(trim_shift), "trim_shift", "must be finite");
}

double resonance_frequency(double L, double C) {
    if (!(L > 0.0) || !(C > 0.0)) {
        throw DomainError("resonance_frequency: L and C must be positive");
    }
    return 1.0 / (units::two_pi * std::sqrt(L * C));
}

double screened_inductance(double L0, double M) {
    if (!(L0 > 0.0)) {
        throw DomainError("screened_inductance: L0 must be positive");
    }
    if (!(std::abs(M) < L0)) {
        throw DomainError("screened_inductance: |M| >= L0 leaves no positive inductance");
    }
    const double ratio = M / L0;
    return L0 * (1.0 - ratio * ratio);
}

double coupling_ratio(double d, const PinCouplingModel& pin) {
    if (!(d >= pin.d_min)) {
        throw DomainError("coupling_ratio: pin below its closest allowed height");
    }
    return pin.m_max * std::exp(-(d - pin.d_min) / pin.lambda);
}

double coupling_ratio_slope(double d, const PinCouplingModel& pin) {
    return -coupling_ratio(d, pin) / pin.lambda;
}

PinCouplingModel calibrate_pin_model(const PinAnchors& a) {
    if (!(a.f_baseline > 0.0) || !std::isfinite(a.f_closest)) {
        throw CalibrationError("baseline frequency must be positive and finite");
    }
    if (!(a.d_min > 0.0)) {
        throw CalibrationError("d_min must be positive");
    }
    if (!(a.f_closest >= a.f_baseline)) {
        throw CalibrationError("closest-approach frequency is below the baseline; screening only raises f_r");
    }
    if (!(a.peak_sensitivity > 0.0) || !std::isfinite(a.peak_sensitivity)) {
        throw CalibrationError("peak sensitivity must be positive");
    }

    PinCouplingModel pin;
    pin.d_min = a.d_min;
    if (a.f_closest == a.f_baseline) {
        // No coupling: any decay length reproduces the anchors.
        pin.m_max = 0.0;
        pin.lambda = a.d_min;
        return pin;
    }

    // f_closest / f_baseline = 1/sqrt(1 - m^2)
    const double r = a.f_closest / a.f_baseline;
    const double m2 = 1.0 - 1.0 / (r * r);
    if (!(m2 < 1.0)) {
        throw CalibrationError("anchors imply m_max >= 1");
    }
    pin.m_max = std::sqrt(m2);
    // |df/dd| at d_min = f_baseline m^2 (1 - m^2)^(-3/2) / lambda
    pin.lambda = a.f_baseline * m2 * screening_gain(pin.m_max) / a.peak_sensitivity;
    if (!(pin.lambda > 0.0) || !std::isfinite(pin.lambda)) {
        throw CalibrationError("anchors give a non-positive decay length");
    }
    return pin;
}

double coarse_trim(double finger_length_increase_um) {
    if (finger_length_increase_um < 0.0) {
        throw DomainError("coarse_trim: finger length increase must be >= 0");
    }
    return kCoarseTrimHzPerMicron * finger_length_increase_um;
}

double effective_finger_length(double trim_shift_hz) { return trim_shift_hz / kCoarseTrimHzPerMicron; }

TuningState apply_coarse_trim(TuningState state, double finger_length_increase_um) {
    state.trim_shift += coarse_trim(finger_length_increase_um);
    return state;
}

double tuned_frequency(const ResonatorParams& params, const TuningState& state,
                       const PinCouplingModel& pin) {
    const double f_unscreened = unscreened_frequency(params, state.trim_shift);
    const double omega = units::two_pi * f_unscreened;
    const double C_eff = 1.0 / (omega * omega * params.L0);
    const double m = coupling_ratio(state.d, pin);
    return resonance_frequency(screened_inductance(params.L0, m * params.L0), C_eff);
}

double tuning_slope(const ResonatorParams& params, const TuningState& state,
                    const PinCouplingModel& pin) {
    const double f_unscreened = unscreened_frequency(params, state.trim_shift);
    const double m = coupling_ratio(state.d, pin);
    return f_unscreened * screening_gain(m) * m * coupling_ratio_slope(state.d, pin);
}

FrequencyBand tuning_band(const ResonatorParams& params, double trim_shift, const PinCouplingModel& pin) {
    const double low = unscreened_frequency(params, trim_shift);
    const TuningState closest{pin.d_min, trim_shift};
    return {low, tuned_frequency(params, closest, pin)};
}

}  // namespace resotune::model
