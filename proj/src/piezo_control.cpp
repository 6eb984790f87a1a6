#include "resotune/piezo_control.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "resotune/errors.hpp"
#include "resotune/fitting.hpp"

namespace resotune::piezo {

namespace {

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw ValidationError(field, what);
    }
}

std::uint64_t measurement_seed(std::uint64_t seed, std::uint64_t index) {
    return seed + index * 0x9E3779B97F4A7C15ULL;
}

struct Measurement {
    std::optional<fitting::FitResult> fit;
    std::string error;
    double center = 0.0;
    double span = 0.0;
};

Measurement measure(const Plant& plant, double center, double span, std::size_t points,
                    const ControllerConfig& cfg, std::uint64_t index, double timestamp) {
    Measurement m;
    m.center = center;
    m.span = span;
    transmission::SweepConfig sweep;
    sweep.f_start = center - 0.5 * span;
    sweep.f_stop = center + 0.5 * span;
    sweep.n_points = points;
    sweep.P_in_dBm = cfg.P_in_dBm;
    sweep.duration_s = cfg.sweep_duration_s;
    auto noise = plant.noise;
    noise.seed = measurement_seed(noise.seed, index);
    try {
        const auto trace =
            transmission::synthesize_sweep(sweep, plant.params, plant.state, plant.pin, noise, timestamp);
        auto fit = fitting::fit_resonance(trace);
        if (fit.low_confidence) {
            m.error = "resonance at the edge of the sweep";
        } else {
            m.fit = std::move(fit);
        }
    } catch (const Error& e) {
        m.error = e.what();
    }
    return m;
}

}  // namespace

void PiezoStage::validate() const {
    require(std::isfinite(step_size) && step_size > 0.0, "step_size", "must be > 0");
    require(std::isfinite(reference_voltage) && reference_voltage > min_voltage, "reference_voltage",
            "must exceed min_voltage");
    require(std::isfinite(min_voltage) && min_voltage >= 0.0, "min_voltage", "must be >= 0");
    require(std::isfinite(step_at_min_voltage) && step_at_min_voltage > 0.0 && step_at_min_voltage <= step_size,
            "step_at_min_voltage", "must lie in (0, step_size]");
    require(std::isfinite(voltage) && voltage >= 0.0, "voltage", "must be >= 0");
    require(std::isfinite(min_position) && min_position >= 0.0, "min_position", "must be >= 0");
    require(std::isfinite(position) && position >= min_position, "position", "must be >= min_position (d_min)");
    require(std::isfinite(backlash) && backlash >= 0.0, "backlash", "must be >= 0");
}

double PiezoStage::step_length(double drive) const {
    if (drive < min_voltage) {
        return 0.0;
    }
    const double per_volt = (step_size - step_at_min_voltage) / (reference_voltage - min_voltage);
    return step_at_min_voltage + (drive - min_voltage) * per_volt;
}

double piezo_step(PiezoStage& stage, StepDirection direction) {
    if (stage.voltage < stage.min_voltage) {
        std::ostringstream os;
        os << "stage stalled: " << stage.voltage << " V is below the " << stage.min_voltage << " V minimum";
        throw StageStalled(os.str());
    }
    const int dir = static_cast<int>(direction);
    double slack = stage.slack;
    if (stage.last_direction != 0 && dir != stage.last_direction) {
        slack = stage.backlash;
    }
    const double length = stage.step_length();
    const double taken_up = std::min(slack, length);
    const double next = stage.position + dir * (length - taken_up);
    if (next < stage.min_position) {
        throw MechanicalLimit("step would move the pin below its closest allowed height");
    }
    stage.position = next;
    stage.slack = slack - taken_up;
    stage.last_direction = dir;
    return stage.position;
}

double frequency_sensitivity(const model::TuningState& state, const model::ResonatorParams& params,
                             const model::PinCouplingModel& pin, double step_length) {
    return std::abs(model::tuning_slope(params, state, pin)) * step_length;
}

void ControllerConfig::validate() const {
    require(std::isfinite(f_target) && f_target > 0.0, "f_target", "must be > 0");
    require(std::isfinite(tolerance_ppm) && tolerance_ppm > 0.0, "tolerance_ppm", "must be > 0");
    require(max_steps > 0, "max_steps", "must be > 0");
    require(steps_per_measurement > 0, "steps_per_measurement", "must be > 0");
    require(max_pulses_per_move > 0, "max_pulses_per_move", "must be > 0");
    require(std::isfinite(coarse_voltage) && std::isfinite(fine_voltage), "coarse_voltage", "must be finite");
    require(sweep_points >= 16, "sweep_points", "must be >= 16");
    require(search_points >= 16, "search_points", "must be >= 16");
    require(std::isfinite(span_linewidths) && span_linewidths > 0.0, "span_linewidths", "must be > 0");
    require(std::isfinite(sweep_duration_s) && sweep_duration_s > 0.0, "sweep_duration_s", "must be > 0");
}

const char* to_string(TuningOutcome outcome) {
    switch (outcome) {
        case TuningOutcome::converged: return "converged";
        case TuningOutcome::unreachable: return "unreachable";
        case TuningOutcome::step_budget_exhausted: return "step_budget_exhausted";
        case TuningOutcome::measurement_failed: return "measurement_failed";
    }
    return "unknown";
}

std::vector<double> per_pulse_shifts(const TuningSession& session, double voltage) {
    std::vector<double> out;
    for (std::size_t i = 1; i < session.log.size(); ++i) {
        const auto& prev = session.log[i - 1];
        const auto& cur = session.log[i];
        if (cur.fit_ok && prev.fit_ok && cur.pulses != 0 && cur.voltage == voltage) {
            out.push_back(std::abs(cur.measured_f_r - prev.measured_f_r) / static_cast<double>(std::labs(cur.pulses)));
        }
    }
    return out;
}

TuningSession tune_to_target(Plant plant, PiezoStage stage, const ControllerConfig& cfg) {
    plant.params.validate();
    plant.pin.validate();
    plant.noise.validate();
    cfg.validate();
    stage.min_position = std::max(stage.min_position, plant.pin.d_min);
    stage.position = plant.state.d;
    plant.state.validate(plant.pin);
    stage.validate();
    require(stage.step_length(cfg.coarse_voltage) > 0.0, "coarse_voltage", "stage does not move at this voltage");
    require(stage.step_length(cfg.fine_voltage) > 0.0, "fine_voltage", "stage does not move at this voltage");

    const double tol = cfg.tolerance_hz();
    const auto band = model::tuning_band(plant.params, plant.state.trim_shift, plant.pin);
    const double linewidth = band.high / transmission::loaded_q(plant.params.Qi0, plant.params.Qe);
    const double search_center = 0.5 * (band.low + band.high);
    const double search_span = (band.high - band.low) + 10.0 * linewidth;

    TuningSession session;
    double clock = 0.0;
    std::uint64_t n_measurements = 0;

    // Measures at the predicted position; one retry over the whole tuning band.
    auto take_measurement = [&](double center, double span, std::size_t points, TuningLogEntry& entry) {
        auto m = measure(plant, center, span, points, cfg, n_measurements++, clock);
        clock += cfg.sweep_duration_s;
        if (!m.fit) {
            entry.note = "fit failed (" + m.error + "); retried over the full band";
            m = measure(plant, search_center, search_span, cfg.search_points, cfg, n_measurements++, clock);
            clock += cfg.sweep_duration_s;
        }
        entry.timestamp = clock;
        entry.position = stage.position;
        entry.sweep_center = m.center;
        entry.sweep_span = m.span;
        if (m.fit) {
            entry.fit_ok = true;
            entry.measured_f_r = m.fit->f_r;
            entry.error_hz = m.fit->f_r - cfg.f_target;
            entry.fit_rms = m.fit->rms_residual;
            entry.fit_iterations = m.fit->n_iterations;
        } else {
            entry.note += entry.note.empty() ? m.error : "; " + m.error;
        }
        return m.fit.has_value();
    };

    auto finish = [&](TuningOutcome outcome, std::string diagnostics) {
        session.outcome = outcome;
        session.diagnostics = std::move(diagnostics);
        session.final_position = stage.position;
        for (auto it = session.log.rbegin(); it != session.log.rend(); ++it) {
            if (it->fit_ok) {
                session.final_f_r = it->measured_f_r;
                session.final_error_hz = std::abs(it->error_hz);
                break;
            }
        }
        return session;
    };

    TuningLogEntry first;
    first.voltage = stage.voltage;
    const bool ok = take_measurement(search_center, search_span, cfg.search_points, first);
    session.log.push_back(first);
    if (!ok) {
        return finish(TuningOutcome::measurement_failed, "initial measurement failed: " + first.note);
    }

    double f = first.measured_f_r;
    std::optional<double> prev_f;
    long prev_pulses = 0;
    double prev_voltage = 0.0;

    while (true) {
        const double err = cfg.f_target - f;  // > 0: need higher frequency, move toward the resonator
        if (std::abs(err) <= tol) {
            return finish(TuningOutcome::converged, "");
        }
        if (!band.contains(cfg.f_target)) {
            std::ostringstream os;
            os.precision(10);
            os << "target " << cfg.f_target << " Hz lies outside the tuning band [" << band.low << ", " << band.high
               << "] Hz";
            return finish(TuningOutcome::unreachable, os.str());
        }
        if (session.steps >= cfg.max_steps) {
            return finish(TuningOutcome::step_budget_exhausted,
                          "no convergence within " + std::to_string(cfg.max_steps) + " steps");
        }

        const model::TuningState here{stage.position, plant.state.trim_shift};
        const double coarse_model =
            frequency_sensitivity(here, plant.params, plant.pin, stage.step_length(cfg.coarse_voltage));
        const bool fine = std::abs(err) < cfg.steps_per_measurement * coarse_model;
        const double drive = fine ? cfg.fine_voltage : cfg.coarse_voltage;

        double per_pulse = frequency_sensitivity(here, plant.params, plant.pin, stage.step_length(drive));
        if (prev_f && prev_pulses != 0 && prev_voltage == drive) {
            const double secant = (f - *prev_f) / static_cast<double>(prev_pulses);
            if (secant > 0.0 && std::isfinite(secant)) {
                per_pulse = secant;
            }
        }

        long pulses = std::lround(err / per_pulse);
        if (pulses == 0) {
            pulses = err > 0.0 ? 1 : -1;
        }
        const long cap = fine ? cfg.steps_per_measurement : cfg.max_pulses_per_move;
        pulses = std::clamp(pulses, -cap, cap);

        stage.voltage = drive;
        if (pulses > 0) {
            const double room = stage.position - stage.min_position;
            const auto reachable = static_cast<long>(std::floor(room / stage.step_length() + 1e-9));
            if (reachable <= 0) {
                return finish(TuningOutcome::unreachable, "pin at its closest allowed height and the resonance "
                                                          "is still below the target");
            }
            pulses = std::min(pulses, reachable);
        }

        const auto direction = pulses > 0 ? StepDirection::toward_resonator : StepDirection::away_from_resonator;
        for (long k = 0; k < std::labs(pulses); ++k) {
            piezo_step(stage, direction);
        }
        plant.state.d = stage.position;
        ++session.steps;
        session.total_pulses += std::labs(pulses);

        TuningLogEntry entry;
        entry.step = session.steps;
        entry.voltage = drive;
        entry.pulses = pulses;
        const double predicted = f + static_cast<double>(pulses) * per_pulse;
        const double span = cfg.span_linewidths * linewidth + std::abs(predicted - f);
        const bool measured = take_measurement(predicted, span, cfg.sweep_points, entry);
        session.log.push_back(entry);
        if (!measured) {
            return finish(TuningOutcome::measurement_failed, "measurement after step " +
                                                                 std::to_string(session.steps) + " failed: " +
                                                                 entry.note);
        }
        prev_f = f;
        prev_pulses = pulses;
        prev_voltage = drive;
        f = entry.measured_f_r;
    }
}

}  // namespace resotune::piezo
