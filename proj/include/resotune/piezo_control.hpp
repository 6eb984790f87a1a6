#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resotune/resonator_model.hpp"
#include "resotune/transmission.hpp"
#include "resotune/units.hpp"

namespace resotune::piezo {

/// Sign convention: toward the resonator shrinks the separation d.
enum class StepDirection : int { toward_resonator = -1, away_from_resonator = +1 };

/// Stick-slip translation stage carrying the tuning pin.
///
/// Step length is linear in drive voltage between two anchors, (min_voltage,
/// step_at_min_voltage) and (reference_voltage, step_size), and extrapolates
/// linearly above. Below min_voltage the stage does not move.
struct PiezoStage {
    double step_size = 60e-9;            ///< meters per step at reference_voltage
    double reference_voltage = 36.0;     ///< volts
    double min_voltage = 30.0;           ///< volts
    double step_at_min_voltage = 12e-9;  ///< meters per step at min_voltage
    double voltage = 36.0;               ///< current drive, volts
    double position = 0.0;               ///< pin height d, meters
    double min_position = 0.0;           ///< closest allowed height (the plant's d_min)
    double backlash = 0.0;               ///< slack taken up after a direction reversal, meters

    int last_direction = 0;  ///< -1, +1, or 0 before the first step
    double slack = 0.0;      ///< backlash still to be taken up

    void validate() const;

    /// Step length at `drive` volts; zero below min_voltage.
    [[nodiscard]] double step_length(double drive) const;
    [[nodiscard]] double step_length() const { return step_length(voltage); }
};

/// Moves the stage one step and returns the new position.
/// Throws StageStalled below min_voltage and MechanicalLimit if the step would pass min_position;
/// the stage is left unchanged in both cases.
double piezo_step(PiezoStage& stage, StepDirection direction);

/// |df/dd| at the state's separation times `step_length`, in Hz per step.
double frequency_sensitivity(const model::TuningState& state, const model::ResonatorParams& params,
                             const model::PinCouplingModel& pin, double step_length);

struct Plant {
    model::ResonatorParams params;
    model::TuningState state;
    model::PinCouplingModel pin;
    transmission::NoiseModel noise;
};

struct ControllerConfig {
    double f_target = units::kRubidiumHyperfine;
    double tolerance_ppm = 0.3;
    int max_steps = 2000;  ///< budget of actuation moves (each one or more pulses, then a measurement)
    int steps_per_measurement = 8;  ///< pulses per move in the fine regime
    double coarse_voltage = 36.0;
    double fine_voltage = 30.0;
    long max_pulses_per_move = 20000;

    std::size_t sweep_points = 401;
    double span_linewidths = 10.0;
    std::size_t search_points = 2001;
    double P_in_dBm = -131.0;
    double sweep_duration_s = 160.0;

    void validate() const;
    [[nodiscard]] double tolerance_hz() const { return tolerance_ppm * 1e-6 * f_target; }
};

enum class TuningOutcome { converged, unreachable, step_budget_exhausted, measurement_failed };

const char* to_string(TuningOutcome outcome);

struct TuningLogEntry {
    int step = 0;          ///< actuation moves completed before this measurement
    double position = 0.0;  ///< meters
    double voltage = 0.0;   ///< drive used for the move that led here
    long pulses = 0;        ///< pulses in that move, positive toward the resonator
    double measured_f_r = 0.0;
    double error_hz = 0.0;  ///< measured_f_r - f_target
    double timestamp = 0.0;
    double sweep_center = 0.0;
    double sweep_span = 0.0;
    bool fit_ok = false;
    double fit_rms = 0.0;
    int fit_iterations = 0;
    std::string note;
};

struct TuningSession {
    std::vector<TuningLogEntry> log;
    TuningOutcome outcome = TuningOutcome::step_budget_exhausted;
    double final_f_r = 0.0;
    double final_error_hz = 0.0;  ///< |f_r - f_target| at the last good measurement
    double final_position = 0.0;
    int steps = 0;
    long total_pulses = 0;
    std::string diagnostics;
};

/// Frequency change per pulse between consecutive successful measurements at `voltage`.
std::vector<double> per_pulse_shifts(const TuningSession& session, double voltage);

/// Closed-loop tuning of the simulated plant onto cfg.f_target.
///
/// Each step measures a sweep, fits it, and drives the stage toward the target
/// using a secant estimate of Hz-per-pulse from the last two measurements,
/// falling back to the model sensitivity. Near the target the stage drops to
/// fine_voltage and moves at most steps_per_measurement pulses per step.
TuningSession tune_to_target(Plant plant, PiezoStage stage, const ControllerConfig& cfg);

}  // namespace resotune::piezo
