#include "resotune/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include "resotune/transmission.hpp"

namespace resotune::fitting {

namespace {

using cplx = std::complex<double>;

constexpr std::size_t kMinGuessPoints = 16;

double median(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

// Robust per-point noise level from first differences (MAD, Gaussian-consistent).
double noise_floor(std::span<const double> y) {
    if (y.size() < 3) {
        return 0.0;
    }
    std::vector<double> diff(y.size() - 1);
    for (std::size_t i = 0; i + 1 < y.size(); ++i) {
        diff[i] = y[i + 1] - y[i];
    }
    const double center = median(diff);
    for (double& d : diff) {
        d = std::abs(d - center);
    }
    return 1.4826 * median(std::move(diff)) / std::numbers::sqrt2;
}

std::vector<double> moving_average(std::span<const double> y, std::size_t half_window) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const std::size_t lo = i >= half_window ? i - half_window : 0;
        const std::size_t hi = std::min(y.size() - 1, i + half_window);
        double sum = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) {
            sum += y[j];
        }
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

double interpolate_crossing(double f0, double y0, double f1, double y1, double level) {
    if (y1 == y0) {
        return 0.5 * (f0 + f1);
    }
    return f0 + (level - y0) * (f1 - f0) / (y1 - y0);
}

struct Dip {
    std::size_t min_index;
    double depth;
};

// Contiguous runs deeper than `threshold` outside [excl_lo, excl_hi] (frequencies).
std::vector<Dip> secondary_dips(std::span<const double> f, std::span<const double> y, double excl_lo,
                                double excl_hi, double threshold) {
    std::vector<Dip> dips;
    std::size_t i = 0;
    while (i < y.size()) {
        if (f[i] >= excl_lo && f[i] <= excl_hi) {
            ++i;
            continue;
        }
        if (1.0 - y[i] > threshold) {
            Dip d{i, 1.0 - y[i]};
            while (i < y.size() && 1.0 - y[i] > threshold && !(f[i] >= excl_lo && f[i] <= excl_hi)) {
                if (1.0 - y[i] > d.depth) {
                    d = {i, 1.0 - y[i]};
                }
                ++i;
            }
            dips.push_back(d);
        } else {
            ++i;
        }
    }
    return dips;
}

FitResult make_result(const LineshapeProblem& problem, const LineshapeProblem::Params& theta,
                      const LineshapeProblem::Jacobian& jac, double cost, double initial_cost) {
    FitResult r;
    r.f_r = problem.resonance(theta);
    r.Q_L = std::exp(theta[1]);
    r.Q_e = std::exp(theta[2]);
    r.phi = theta[3];
    const auto n = static_cast<double>(problem.size());
    r.rms_residual = std::sqrt(2.0 * cost / n);
    r.initial_rms_residual = std::sqrt(2.0 * initial_cost / n);
    r.Q_i = r.Q_L < r.Q_e ? 1.0 / (1.0 / r.Q_L - 1.0 / r.Q_e) : std::numeric_limits<double>::infinity();

    const double dof = n - 4.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.uncertainties = {nan, nan, nan, nan, nan};
    if (dof > 0.0) {
        const Eigen::Matrix4d normal = jac.transpose() * jac;
        Eigen::FullPivLU<Eigen::Matrix4d> lu(normal);
        if (lu.isInvertible()) {
            const Eigen::Matrix4d cov = (2.0 * cost / dof) * lu.inverse();
            r.uncertainties.f_r = problem.width_ref() * std::sqrt(cov(0, 0));
            r.uncertainties.Q_L = r.Q_L * std::sqrt(cov(1, 1));
            r.uncertainties.Q_e = r.Q_e * std::sqrt(cov(2, 2));
            r.uncertainties.phi = std::sqrt(cov(3, 3));
            if (std::isfinite(r.Q_i)) {
                Eigen::Vector4d grad(0.0, r.Q_i * r.Q_i / r.Q_L, -r.Q_i * r.Q_i / r.Q_e, 0.0);
                r.uncertainties.Q_i = std::sqrt(grad.dot(cov * grad));
            }
        }
    }
    return r;
}

}  // namespace

LineshapeProblem::LineshapeProblem(std::span<const double> frequencies, std::span<const double> power_ratio,
                                   double f_ref, double width_ref)
    : f_(frequencies), y_(power_ratio), f_ref_(f_ref), width_ref_(width_ref) {}

LineshapeProblem::Params LineshapeProblem::to_internal(double f_r, double Q_L, double Q_e, double phi) const {
    return {(f_r - f_ref_) / width_ref_, std::log(Q_L), std::log(Q_e), phi};
}

void LineshapeProblem::evaluate(const Params& theta, Eigen::VectorXd& residuals, Jacobian* jacobian) const {
    const double f_r = resonance(theta);
    const double Q_L = std::exp(theta[1]);
    const cplx K = std::exp(theta[1] - theta[2]) * std::polar(1.0, theta[3]);
    const auto n = static_cast<Eigen::Index>(f_.size());
    residuals.resize(n);
    if (jacobian != nullptr) {
        jacobian->resize(n, 4);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double f = f_[static_cast<std::size_t>(i)];
        const double t = (f - f_r) / f_r;
        const cplx g(1.0, 2.0 * Q_L * t);
        const cplx Kg = K / g;
        const cplx z = 1.0 - Kg;
        residuals[i] = std::norm(z) - y_[static_cast<std::size_t>(i)];
        if (jacobian != nullptr) {
            const cplx zc = std::conj(z);
            const cplx Kg2 = Kg / g;
            const cplx dg_du(0.0, -2.0 * Q_L * (f / (f_r * f_r)) * width_ref_);
            const cplx dz_du = Kg2 * dg_du;
            const cplx dz_da = -Kg + Kg2 * cplx(0.0, 2.0 * Q_L * t);
            const cplx dz_db = Kg;
            const cplx dz_dphi = cplx(0.0, -1.0) * Kg;
            (*jacobian)(i, 0) = 2.0 * std::real(zc * dz_du);
            (*jacobian)(i, 1) = 2.0 * std::real(zc * dz_da);
            (*jacobian)(i, 2) = 2.0 * std::real(zc * dz_db);
            (*jacobian)(i, 3) = 2.0 * std::real(zc * dz_dphi);
        }
    }
}

InitialGuess initial_guess(const transmission::SweepTrace& trace) {
    trace.validate();
    if (trace.size() < kMinGuessPoints) {
        throw ValidationError("frequencies", "at least 16 points are needed to locate a resonance");
    }
    const std::span<const double> f = trace.frequencies;
    const std::span<const double> raw = trace.power_ratio;

    const double noise = noise_floor(raw);
    const auto raw_min = static_cast<std::size_t>(std::min_element(raw.begin(), raw.end()) - raw.begin());
    const double raw_depth = 1.0 - raw[raw_min];

    // Pin vibration scatters only the points near resonance, so size the smoothing from the noise there.
    const std::size_t reach = std::max(kMinGuessPoints, raw.size() / 16);
    const std::size_t lo = raw_min > reach ? raw_min - reach : 0;
    const std::size_t hi = std::min(raw.size(), raw_min + reach + 1);
    const double local_noise = std::max(noise, noise_floor(raw.subspan(lo, hi - lo)));
    std::size_t half_window = 0;
    if (local_noise > 0.02 * raw_depth) {
        const double points = std::pow(local_noise / (0.05 * raw_depth), 2);
        half_window = std::clamp(static_cast<std::size_t>(std::ceil(0.5 * points)), std::size_t{2},
                                 std::max(std::size_t{2}, raw.size() / 32));
    }
    const std::vector<double> y =
        half_window > 0 ? moving_average(raw, half_window) : std::vector<double>(raw.begin(), raw.end());
    const double smoothed_noise = local_noise / std::sqrt(2.0 * static_cast<double>(half_window) + 1.0);

    const auto min_it = std::min_element(y.begin(), y.end());
    const auto imin = static_cast<std::size_t>(min_it - y.begin());
    const double y_min = *min_it;
    const double depth = 1.0 - y_min;
    if (!(depth > 3.0 * noise) || depth < 1e-12) {
        std::ostringstream os;
        os << "dip depth " << depth << " is below 3x the noise floor " << noise;
        throw NoResonance(os.str());
    }

    InitialGuess g;
    g.f_r = f[imin];
    const double level = 1.0 - 0.5 * depth;

    std::size_t i = imin;
    while (i > 0 && y[i] < level) {
        --i;
    }
    const bool left_found = y[i] >= level;
    const double f_left = left_found ? interpolate_crossing(f[i], y[i], f[i + 1], y[i + 1], level) : f.front();

    std::size_t j = imin;
    while (j + 1 < y.size() && y[j] < level) {
        ++j;
    }
    const bool right_found = y[j] >= level;
    const double f_right = right_found ? interpolate_crossing(f[j - 1], y[j - 1], f[j], y[j], level) : f.back();

    double fwhm;
    if (left_found && right_found) {
        fwhm = f_right - f_left;
    } else if (left_found) {
        fwhm = 2.0 * (g.f_r - f_left);
    } else if (right_found) {
        fwhm = 2.0 * (f_right - g.f_r);
    } else {
        fwhm = f.back() - f.front();
    }
    const double bin = (f.back() - f.front()) / static_cast<double>(f.size() - 1);
    fwhm = std::max(fwhm, bin);
    g.low_confidence = imin == 0 || imin + 1 == y.size() || !left_found || !right_found;
    if (g.low_confidence) {
        g.warnings.emplace_back("dip is not fully contained in the sweep");
    }

    g.Q_L = g.f_r / fwhm;
    const double coupling = std::clamp(1.0 - std::sqrt(std::max(y_min, 0.0)), 1e-6, 0.99);
    g.Q_e = g.Q_L / coupling;
    g.phi = 0.0;

    // Other dips: fit only the deepest and fence the fit window off from the rest.
    g.window_begin = 0;
    g.window_end = y.size();
    const auto others = secondary_dips(f, y, f_left - 2.0 * fwhm, f_right + 2.0 * fwhm,
                                       std::max({6.0 * noise, 6.0 * smoothed_noise, 0.1 * depth}));
    for (const auto& d : others) {
        std::ostringstream os;
        os << "secondary dip at " << f[d.min_index] << " Hz (depth " << d.depth << ") ignored";
        g.warnings.push_back(os.str());
        const std::size_t mid = (d.min_index + imin) / 2;
        if (d.min_index < imin) {
            g.window_begin = std::max(g.window_begin, mid);
        } else {
            g.window_end = std::min(g.window_end, mid + 1);
        }
    }
    return g;
}

FitResult fit_resonance(const transmission::SweepTrace& trace, std::optional<InitialGuess> guess,
                        const FitOptions& options) {
    trace.validate();
    InitialGuess g = guess ? std::move(*guess) : initial_guess(trace);
    if (!(g.f_r > 0.0) || !(g.Q_L > 0.0) || !(g.Q_e > 0.0) || !(std::abs(g.phi) < std::numbers::pi / 2)) {
        throw ValidationError("guess", "f_r, Q_L, Q_e must be positive and |phi| < pi/2");
    }
    if (g.window_end == 0 || g.window_end > trace.size()) {
        g.window_begin = 0;
        g.window_end = trace.size();
    }
    const std::size_t count = g.window_end - g.window_begin;
    if (count < 5) {
        throw ValidationError("frequencies", "fit window holds fewer than 5 points");
    }
    const std::span<const double> f(trace.frequencies.data() + g.window_begin, count);
    const std::span<const double> y(trace.power_ratio.data() + g.window_begin, count);

    const LineshapeProblem problem(f, y, g.f_r, g.f_r / g.Q_L);
    LineshapeProblem::Params theta = problem.to_internal(g.f_r, g.Q_L, g.Q_e, g.phi);

    Eigen::VectorXd r;
    Eigen::VectorXd r_trial;
    LineshapeProblem::Jacobian J;
    problem.evaluate(theta, r, &J);
    double cost = 0.5 * r.squaredNorm();
    const double initial_cost = cost;
    double mu = options.initial_damping;
    bool converged = cost == 0.0;
    int iter = 0;

    while (!converged && iter < options.max_iterations) {
        ++iter;
        const Eigen::Matrix4d A = J.transpose() * J;
        const Eigen::Vector4d grad = J.transpose() * r;
        Eigen::Vector4d diag = A.diagonal();
        const double diag_floor = 1e-30 * std::max(1.0, diag.maxCoeff());
        diag = diag.cwiseMax(diag_floor);
        const Eigen::Matrix4d damped = A + mu * Eigen::Matrix4d(diag.asDiagonal());
        const Eigen::Vector4d step = damped.ldlt().solve(-grad);

        const LineshapeProblem::Params trial = theta + step;
        bool accepted = false;
        double trial_cost = cost;
        if (step.allFinite() && std::abs(trial[3]) < std::numbers::pi / 2) {
            problem.evaluate(trial, r_trial, nullptr);
            trial_cost = 0.5 * r_trial.squaredNorm();
            accepted = std::isfinite(trial_cost) && trial_cost < cost;
        }

        const bool small_step =
            step.norm() <= options.step_tolerance * (theta.norm() + options.step_tolerance);
        if (accepted) {
            const double decrease = cost - trial_cost;
            theta = trial;
            problem.evaluate(theta, r, &J);
            cost = trial_cost;
            mu = std::max(mu / 10.0, 1e-15);
            converged = small_step || decrease <= options.cost_tolerance * (cost + decrease) || cost == 0.0;
        } else {
            mu *= 10.0;
            // No damping level yields descent: the current point is a minimum to working precision.
            converged = small_step || mu > 1e16;
        }
    }

    FitResult result = make_result(problem, theta, J, cost, initial_cost);
    result.n_iterations = iter;
    result.converged = converged;
    result.low_confidence = g.low_confidence;
    result.warnings = g.warnings;

    if (!converged) {
        throw ConvergenceFailure("no convergence within " + std::to_string(options.max_iterations) + " iterations",
                                 std::move(result));
    }
    if (!(result.f_r >= f.front() && result.f_r <= f.back())) {
        result.converged = false;
        throw ConvergenceFailure("fitted resonance lies outside the swept span", std::move(result));
    }
    if (!(result.Q_L < result.Q_e)) {
        throw NonPhysicalFitResult("fit optimum has Q_L >= Q_e", std::move(result));
    }
    result.Q_i = transmission::internal_q(result.Q_L, result.Q_e);
    return result;
}

const char* to_string(FitStatus status) {
    switch (status) {
        case FitStatus::ok: return "ok";
        case FitStatus::no_resonance: return "no_resonance";
        case FitStatus::non_physical: return "non_physical";
        case FitStatus::convergence_failure: return "convergence_failure";
        case FitStatus::invalid_trace: return "invalid_trace";
    }
    return "unknown";
}

std::vector<PowerSeriesEntry> fit_power_series(std::span<const transmission::SweepTrace> traces,
                                               const FitOptions& options) {
    std::vector<PowerSeriesEntry> out;
    out.reserve(traces.size());
    for (const auto& trace : traces) {
        PowerSeriesEntry e;
        e.P_in_dBm = trace.P_in_dBm;
        try {
            e.fit = fit_resonance(trace, std::nullopt, options);
        } catch (const NoResonance& ex) {
            e.status = FitStatus::no_resonance;
            e.message = ex.what();
        } catch (const NonPhysicalFitResult& ex) {
            e.status = FitStatus::non_physical;
            e.fit = ex.best();
            e.message = ex.what();
        } catch (const ConvergenceFailure& ex) {
            e.status = FitStatus::convergence_failure;
            e.fit = ex.best();
            e.message = ex.what();
        } catch (const ValidationError& ex) {
            e.status = FitStatus::invalid_trace;
            e.message = ex.what();
        }
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PowerSeriesEntry& a, const PowerSeriesEntry& b) { return a.P_in_dBm < b.P_in_dBm; });
    return out;
}

}  // namespace resotune::fitting
