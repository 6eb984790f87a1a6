#include "resotune/stability.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <fftw3.h>

#include "resotune/errors.hpp"
#include "resotune/transmission.hpp"
#include "resotune/units.hpp"

namespace resotune::stability {

namespace {

constexpr std::size_t kMinOscillationSamples = 64;
constexpr double kFalseAlarm = 1e-3;

struct SineFit {
    double amplitude = 0.0;
    double explained = 0.0;  // reduction in residual sum of squares
};

// Least-squares fit of c + a cos(2 pi nu t) + b sin(2 pi nu t).
SineFit fit_sine(std::span<const double> y, double dt, double nu) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = units::two_pi * nu * dt * static_cast<double>(i);
        const Eigen::Vector3d basis(1.0, std::cos(w), std::sin(w));
        A += basis * basis.transpose();
        rhs += basis * y[i];
    }
    const Eigen::Vector3d coef = A.ldlt().solve(rhs);
    return {std::hypot(coef[1], coef[2]), coef.dot(rhs)};
}

class FftwPlan {
public:
    FftwPlan(std::vector<double>& in, std::vector<std::complex<double>>& out)
        : plan_(fftw_plan_dft_r2c_1d(static_cast<int>(in.size()), in.data(),
                                     reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE)) {}
    FftwPlan(const FftwPlan&) = delete;
    FftwPlan& operator=(const FftwPlan&) = delete;
    ~FftwPlan() { fftw_destroy_plan(plan_); }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

double median(std::vector<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace

void FrequencyTimeSeries::validate() const {
    if (timestamps.size() != f_r.size()) {
        throw ValidationError("f_r", "length differs from timestamps");
    }
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        if (!std::isfinite(timestamps[i]) || !std::isfinite(f_r[i])) {
            throw ValidationError("timestamps", "values must be finite");
        }
        if (i > 0 && !(timestamps[i] > timestamps[i - 1])) {
            throw ValidationError("timestamps", "must be strictly increasing");
        }
    }
    if (!(f0 > 0.0) || !std::isfinite(f0)) {
        throw ValidationError("f0", "must be > 0");
    }
}

DriftRate drift_rate(const FrequencyTimeSeries& series) {
    series.validate();
    const std::size_t n = series.size();
    if (n < 3) {
        throw ValidationError("timestamps", "drift needs at least 3 samples");
    }
    double t_mean = 0.0;
    double f_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t_mean += series.timestamps[i];
        f_mean += series.f_r[i];
    }
    t_mean /= static_cast<double>(n);
    f_mean /= static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = series.timestamps[i] - t_mean;
        sxx += dt * dt;
        sxy += dt * (series.f_r[i] - f_mean);
    }
    if (!(sxx > 0.0)) {
        throw ValidationError("timestamps", "degenerate time span");
    }
    DriftRate rate;
    rate.slope_hz_per_hour = sxy / sxx * units::kHour;
    rate.ppb_per_hour = rate.slope_hz_per_hour / series.f0 * 1e9;
    return rate;
}

double peak_to_peak_deviation(const FrequencyTimeSeries& series) {
    if (series.f_r.empty()) {
        throw ValidationError("f_r", "series is empty");
    }
    const auto [lo, hi] = std::minmax_element(series.f_r.begin(), series.f_r.end());
    return *hi - *lo;
}

Oscillation detect_oscillation(std::span<const double> samples, double sample_interval, double hz_per_unit) {
    const std::size_t n = samples.size();
    if (n < kMinOscillationSamples) {
        throw ValidationError("samples", "oscillation detection needs at least 64 samples");
    }
    if (!(sample_interval > 0.0)) {
        throw ValidationError("sample_interval", "must be > 0");
    }

    double mean = 0.0;
    for (double s : samples) {
        mean += s;
    }
    mean /= static_cast<double>(n);

    std::vector<double> in(n);
    std::transform(samples.begin(), samples.end(), in.begin(), [mean](double s) { return s - mean; });
    std::vector<std::complex<double>> spectrum(n / 2 + 1);
    {
        const FftwPlan plan(in, spectrum);
        plan.execute();
    }

    // Bins 1 .. n/2-1: skip DC and Nyquist.
    const std::size_t bins = n / 2 - 1;
    std::vector<double> power(bins);
    for (std::size_t k = 1; k <= bins; ++k) {
        power[k - 1] = std::norm(spectrum[k]) / static_cast<double>(n);
    }
    const auto peak_it = std::max_element(power.begin(), power.end());
    const std::size_t peak_bin = static_cast<std::size_t>(peak_it - power.begin()) + 1;
    const double noise_level = median(power) / std::numbers::ln2;
    const double threshold = std::log(static_cast<double>(bins)) - std::log(kFalseAlarm);
    if (!(*peak_it > 0.0) || *peak_it <= noise_level * threshold) {
        throw NoOscillation("no spectral peak above the noise floor");
    }

    // Golden-section refinement of the modulation frequency within one bin of the peak.
    const double df = 1.0 / (static_cast<double>(n) * sample_interval);
    double lo = (static_cast<double>(peak_bin) - 1.0) * df;
    double hi = (static_cast<double>(peak_bin) + 1.0) * df;
    lo = std::max(lo, 0.25 * df);
    const double ratio = std::numbers::phi - 1.0;
    double a = hi - ratio * (hi - lo);
    double b = lo + ratio * (hi - lo);
    double fa = fit_sine(in, sample_interval, a).explained;
    double fb = fit_sine(in, sample_interval, b).explained;
    for (int it = 0; it < 80 && (hi - lo) > 1e-12 * df; ++it) {
        if (fa > fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = fit_sine(in, sample_interval, a).explained;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = fit_sine(in, sample_interval, b).explained;
        }
    }
    const double nu = 0.5 * (lo + hi);
    const SineFit best = fit_sine(in, sample_interval, nu);

    Oscillation osc;
    osc.frequency_hz = nu;
    osc.amplitude = best.amplitude * std::abs(hz_per_unit);
    osc.snr = *peak_it / noise_level;
    return osc;
}

Oscillation detect_oscillation(const FrequencyTimeSeries& series) {
    series.validate();
    if (series.size() < kMinOscillationSamples) {
        throw ValidationError("timestamps", "oscillation detection needs at least 64 samples");
    }
    const double dt = (series.timestamps.back() - series.timestamps.front()) / static_cast<double>(series.size() - 1);
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (std::abs(series.timestamps[i] - series.timestamps[i - 1] - dt) > 1e-6 * dt) {
            throw ValidationError("timestamps", "oscillation detection needs uniform sampling");
        }
    }
    return detect_oscillation(series.f_r, dt, 1.0);
}

Oscillation detect_s21_oscillation(std::span<const double> power_ratio, double sample_interval, double probe_f,
                                   double f_r, double Q_L, double Q_e, double phi) {
    // A resonance displaced by df changes the probe reading by -dP/df_probe * df.
    const double slope = transmission::s21_power_slope(probe_f, f_r, Q_L, Q_e, phi);
    if (!(std::abs(slope) > 0.0)) {
        throw ValidationError("probe_f", "lineshape is flat at the probe frequency");
    }
    return detect_oscillation(power_ratio, sample_interval, 1.0 / slope);
}

std::vector<AllanPoint> allan_deviation(const FrequencyTimeSeries& series) {
    series.validate();
    const std::size_t n = series.size();
    if (n < 3) {
        throw ValidationError("timestamps", "Allan deviation needs at least 3 samples");
    }
    const double tau0 = (series.timestamps.back() - series.timestamps.front()) / static_cast<double>(n - 1);

    // Phase (time error) from fractional frequency.
    std::vector<double> x(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        x[i + 1] = x[i] + tau0 * (series.f_r[i] - series.f0) / series.f0;
    }
    const std::size_t points = x.size();

    std::vector<AllanPoint> out;
    for (std::size_t m = 1; 2 * m < points; m *= 2) {
        const double tau = static_cast<double>(m) * tau0;
        double sum = 0.0;
        const std::size_t terms = points - 2 * m;
        for (std::size_t i = 0; i < terms; ++i) {
            const double d = x[i + 2 * m] - 2.0 * x[i + m] + x[i];
            sum += d * d;
        }
        out.push_back({tau, std::sqrt(sum / (2.0 * static_cast<double>(terms) * tau * tau))});
    }
    return out;
}

FrequencyTimeSeries linear_drift_series(double f0, double total_drift_hz, double duration_s, double cadence_s) {
    if (!(duration_s > 0.0) || !(cadence_s > 0.0)) {
        throw ValidationError("duration_s", "duration and cadence must be > 0");
    }
    FrequencyTimeSeries s;
    s.f0 = f0;
    const auto n = static_cast<std::size_t>(std::floor(duration_s / cadence_s + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * cadence_s;
        s.timestamps.push_back(t);
        s.f_r.push_back(f0 + total_drift_hz * t / duration_s);
    }
    return s;
}

FrequencyTimeSeries bounded_walk_series(double f0, double bound_pp_hz, double duration_s, double cadence_s,
                                        double correlation_s, std::uint64_t seed) {
    if (!(bound_pp_hz >= 0.0) || !(correlation_s > 0.0)) {
        throw ValidationError("bound_pp_hz", "bound must be >= 0 and correlation time > 0");
    }
    auto s = linear_drift_series(f0, 0.0, duration_s, cadence_s);
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double half = 0.5 * bound_pp_hz;
    const double rho = std::exp(-cadence_s / correlation_s);
    const double spread = half / 3.0;
    const double kick = spread * std::sqrt(1.0 - rho * rho);
    double x = 0.0;
    for (double& f : s.f_r) {
        f = f0 + x;
        x = std::clamp(rho * x + kick * gauss(eng), -half, half);
    }
    return s;
}

}  // namespace resotune::stability
