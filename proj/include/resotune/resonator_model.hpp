#pragma once

// Lumped-element model of the pin-tuned resonator.
//
// The resonator is an LC circuit. A superconducting pin held at height d
// screens the inductance through image currents:
//
//     L(d) = L0 (1 - m(d)^2),    m(d) = M/L0 = m_max exp(-(d - d_min)/lambda)
//
// and the resonance sits at f = 1/(2 pi sqrt(L C)). Only the product L0*C is
// observable, so L0 is a reference scale (1 nH by convention) and C is derived
// from a measured frequency.

namespace resotune::model {

inline constexpr double kReferenceInductance = 1e-9;

/// Coarse capacitive trim rate: frequency change per micron of added finger length.
/// Kept integral in Hz so that sums of dyadic lengths trim exactly.
inline constexpr double kCoarseTrimHzPerMicron = -800000.0;

struct ResonatorParams {
    double L0 = kReferenceInductance;  ///< henries
    double C = 0.0;                    ///< farads
    double Qi0 = 35000.0;              ///< internal Q at low power
    double Qe = 5e5;                   ///< external (coupling) Q
    double phi = 0.0;                  ///< lineshape asymmetry, radians

    /// Throws ValidationError naming the first field that breaks an invariant.
    void validate() const;

    /// Un-screened, un-trimmed resonance frequency 1/(2 pi sqrt(L0 C)).
    [[nodiscard]] double bare_frequency() const;

    /// Builds parameters whose bare frequency is `frequency` at inductance `L0`.
    static ResonatorParams from_frequency(double frequency, double L0 = kReferenceInductance,
                                          double Qi0 = 35000.0, double Qe = 5e5, double phi = 0.0);
};

struct PinCouplingModel {
    double m_max = 0.0;   ///< M/L0 at closest approach
    double lambda = 0.0;  ///< decay length, meters
    double d_min = 0.0;   ///< closest pin height, meters

    void validate() const;
};

struct TuningState {
    double d = 0.0;           ///< pin-resonator separation, meters
    double trim_shift = 0.0;  ///< accumulated coarse-trim offset, Hz (<= 0 for added capacitance)

    void validate(const PinCouplingModel& pin) const;
};

/// Measurements a pin model is calibrated against.
struct PinAnchors {
    double f_baseline = 0.0;        ///< resonance with the pin far away, Hz
    double f_closest = 0.0;         ///< resonance at d_min, Hz
    double d_min = 0.0;             ///< meters
    double peak_sensitivity = 0.0;  ///< |df/dd| at d_min, Hz per meter
};

struct FrequencyBand {
    double low = 0.0;   ///< pin retracted to infinity
    double high = 0.0;  ///< pin at d_min

    [[nodiscard]] bool contains(double f) const { return f >= low && f <= high; }
};

double resonance_frequency(double L, double C);

/// L0 (1 - M^2/L0^2). Throws DomainError unless |M| < L0.
double screened_inductance(double L0, double M);

/// Coupling ratio m = M/L0 at separation `d`. Throws DomainError for d < d_min.
double coupling_ratio(double d, const PinCouplingModel& pin);

/// d m / d d, the (non-positive) slope of the coupling law.
double coupling_ratio_slope(double d, const PinCouplingModel& pin);

/// Solves for (m_max, lambda) from the exact screened-frequency model so that
/// f(d_min) = f_closest and |df/dd|(d_min) = peak_sensitivity.
PinCouplingModel calibrate_pin_model(const PinAnchors& anchors);

/// Frequency change for lengthening the capacitor fingers by `finger_length_increase_um` microns.
double coarse_trim(double finger_length_increase_um);

/// Finger-length increase (microns) equivalent to a measured trim shift (Hz, negative).
double effective_finger_length(double trim_shift_hz);

TuningState apply_coarse_trim(TuningState state, double finger_length_increase_um);

/// Resonance of the trimmed, pin-screened resonator.
///
/// The trim is applied to the un-screened frequency, which fixes an effective
/// capacitance; screening then acts on L through the exact 1/sqrt(L C) form.
double tuned_frequency(const ResonatorParams& params, const TuningState& state,
                       const PinCouplingModel& pin);

/// df/dd in Hz per meter (negative: the resonance falls as the pin retracts).
double tuning_slope(const ResonatorParams& params, const TuningState& state,
                    const PinCouplingModel& pin);

/// Frequencies reachable by moving the pin, for the trim recorded in `trim_shift`.
FrequencyBand tuning_band(const ResonatorParams& params, double trim_shift,
                          const PinCouplingModel& pin);

}  // namespace resotune::model
