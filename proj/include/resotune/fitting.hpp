#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resotune/errors.hpp"
#include "resotune/transmission.hpp"

namespace resotune::fitting {

struct InitialGuess {
    double f_r = 0.0;
    double Q_L = 0.0;
    double Q_e = 0.0;
    double phi = 0.0;
    bool low_confidence = false;  ///< dip touches the sweep edge
    std::size_t window_begin = 0;  ///< points [window_begin, window_end) belong to the fitted dip
    std::size_t window_end = 0;
    std::vector<std::string> warnings;
};

/// One-sigma standard errors; indicative only (independent homoscedastic noise assumed).
struct ParameterErrors {
    double f_r = 0.0;
    double Q_L = 0.0;
    double Q_e = 0.0;
    double Q_i = 0.0;
    double phi = 0.0;
};

struct FitResult {
    double f_r = 0.0;
    double Q_L = 0.0;
    double Q_e = 0.0;
    double Q_i = 0.0;
    double phi = 0.0;
    ParameterErrors uncertainties;
    double rms_residual = 0.0;
    double initial_rms_residual = 0.0;
    int n_iterations = 0;
    bool converged = false;
    bool low_confidence = false;
    std::vector<std::string> warnings;
};

struct FitOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-8;   ///< relative parameter step
    double cost_tolerance = 1e-12;  ///< relative cost decrease
    double initial_damping = 1e-3;  ///< relative to the Gauss-Newton diagonal
};

/// Raised when the optimizer exhausts its iteration budget; carries the best parameters seen.
class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, FitResult best) : Error(what), best_(std::move(best)) {}
    [[nodiscard]] const FitResult& best() const noexcept { return best_; }

private:
    FitResult best_;
};

/// Raised when the optimum has Q_L >= Q_e; carries the optimum.
class NonPhysicalFitResult : public NonPhysicalFit {
public:
    NonPhysicalFitResult(const std::string& what, FitResult best)
        : NonPhysicalFit(what), best_(std::move(best)) {}
    [[nodiscard]] const FitResult& best() const noexcept { return best_; }

private:
    FitResult best_;
};

/// Least-squares problem for the power-ratio lineshape.
///
/// Internal coordinates are theta = (u, log Q_L, log Q_e, phi) with
/// f_r = f_ref + u * width_ref, which keeps every coordinate O(1) and makes the
/// problem invariant under a common rescaling of all frequencies.
class LineshapeProblem {
public:
    using Params = Eigen::Vector4d;
    using Jacobian = Eigen::Matrix<double, Eigen::Dynamic, 4>;

    LineshapeProblem(std::span<const double> frequencies, std::span<const double> power_ratio, double f_ref,
                     double width_ref);

    [[nodiscard]] Params to_internal(double f_r, double Q_L, double Q_e, double phi) const;
    [[nodiscard]] double resonance(const Params& theta) const { return f_ref_ + theta[0] * width_ref_; }
    [[nodiscard]] double width_ref() const { return width_ref_; }
    [[nodiscard]] std::size_t size() const { return f_.size(); }

    /// Residuals model - data; fills `jacobian` (d residual / d theta) when non-null.
    void evaluate(const Params& theta, Eigen::VectorXd& residuals, Jacobian* jacobian) const;

private:
    std::span<const double> f_;
    std::span<const double> y_;
    double f_ref_;
    double width_ref_;
};

/// Estimates starting parameters from the deepest dip of `trace`.
/// Throws NoResonance when the dip is shallower than 3x the noise floor.
InitialGuess initial_guess(const transmission::SweepTrace& trace);

/// Damped Gauss-Newton fit of the transmission lineshape to `trace`.
FitResult fit_resonance(const transmission::SweepTrace& trace, std::optional<InitialGuess> guess = std::nullopt,
                        const FitOptions& options = {});

enum class FitStatus { ok, no_resonance, non_physical, convergence_failure, invalid_trace };

const char* to_string(FitStatus status);

struct PowerSeriesEntry {
    double P_in_dBm = 0.0;
    FitStatus status = FitStatus::ok;
    std::optional<FitResult> fit;  ///< the fit, or the best-so-far parameters when available
    std::string message;
};

/// Fits every trace independently; failures are recorded per entry. Sorted by input power.
std::vector<PowerSeriesEntry> fit_power_series(std::span<const transmission::SweepTrace> traces,
                                               const FitOptions& options = {});

}  // namespace resotune::fitting
