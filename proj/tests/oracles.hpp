#pragma once

// Reference implementations written directly from the physics, with no calls
// into the library. Tests compare library results against these.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

namespace oracle {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;

inline double s21(double f, double f_r, double Q_L, double Q_e, double phi) {
    const std::complex<double> num = (Q_L / Q_e) * std::polar(1.0, phi);
    const std::complex<double> den(1.0, 2.0 * Q_L * (f - f_r) / f_r);
    return std::norm(1.0 - num / den);
}

inline double capacitance(double f, double L) { return 1.0 / (kTwoPi * f * kTwoPi * f * L); }

// Resonance with a pin at height d: the bare (trimmed) frequency fixes C, the pin screens L.
inline double frequency(double f_unscreened, double d, double m_max, double lambda, double d_min,
                        double L0 = 1e-9) {
    const double C = capacitance(f_unscreened, L0);
    const double m = m_max * std::exp(-(d - d_min) / lambda);
    const double L = L0 * (1.0 - m * m);
    return 1.0 / (kTwoPi * std::sqrt(L * C));
}

inline double bisect(const std::function<double(double)>& g, double lo, double hi, int iterations = 200) {
    double glo = g(lo);
    for (int i = 0; i < iterations; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if ((gm > 0.0) == (glo > 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct PinFit {
    double m_max;
    double lambda;
};

// Root-finds both anchors numerically: m_max from the closest-approach
// frequency, then lambda from a central finite difference of the slope.
inline PinFit calibrate(double f_baseline, double f_closest, double d_min, double sensitivity) {
    const double m = bisect([&](double mm) { return f_baseline / std::sqrt(1.0 - mm * mm) - f_closest; }, 0.0, 0.999);
    auto slope = [&](double lambda) {
        const double h = 1e-4 * lambda;
        return (frequency(f_baseline, d_min - h, m, lambda, d_min) - frequency(f_baseline, d_min + h, m, lambda, d_min)) /
               (2.0 * h);
    };
    const double log_lambda =
        bisect([&](double ll) { return slope(std::exp(ll)) - sensitivity; }, std::log(1e-8), std::log(1.0));
    return {m, std::exp(log_lambda)};
}

inline double loaded_q(double Q_i, double Q_e) { return 1.0 / (1.0 / Q_i + 1.0 / Q_e); }

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

// kappa that makes the anchor drive store exactly the anchor photon number.
inline double photon_kappa() {
    const double omega = kTwoPi * 6.828e9;
    const double Q_L = 32710.0;
    const double Q_e = 5e5;
    return 11.0 * kHbar * omega * omega / ((Q_L * Q_L / Q_e) * dbm_to_watts(-131.0));
}

}  // namespace oracle
