// resotune: simulate, fit, tune, drift, calibrate.
//
// Exit codes: 0 ok, 1 I/O, 2 validation or calibration, 3 no resonance,
// 4 non-physical fit, 5 unreachable target, 6 convergence failure or budget exhausted.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "resotune/config.hpp"
#include "resotune/errors.hpp"
#include "resotune/fitting.hpp"
#include "resotune/formats.hpp"
#include "resotune/piezo_control.hpp"
#include "resotune/resonator_model.hpp"
#include "resotune/stability.hpp"
#include "resotune/transmission.hpp"
#include "resotune/units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace resotune;

namespace {

enum Exit : int {
    kOk = 0,
    kIo = 1,
    kValidation = 2,
    kNoResonance = 3,
    kNonPhysical = 4,
    kUnreachable = 5,
    kNotConverged = 6,
};

struct Common {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c, const char* out_help) {
    cmd->add_option("--config", c.config, "experiment config (JSON)");
    cmd->add_option("--seed", c.seed, "RNG seed, overrides the config");
    cmd->add_option("--out", c.out, out_help);
}

io::ExperimentConfig load(const Common& c) {
    io::ExperimentConfig cfg = c.config ? io::load_config(*c.config) : io::default_config();
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    return cfg;
}

// Records only the options the user actually passed.
template <class T>
void note(json& args, const char* key, const std::optional<T>& v) {
    if (v) {
        args[key] = *v;
    }
}

json common_args(const Common& c) {
    json args = json::object();
    note(args, "config", c.config);
    note(args, "seed", c.seed);
    note(args, "out", c.out);
    return args;
}

void emit(const Common& c, const json& record) {
    if (c.out) {
        io::write_json(*c.out, record);
    } else {
        std::cout << record.dump(2) << '\n';
    }
}

// Human-readable lines go to stderr when stdout carries the data.
std::ostream& human(const Common& c) { return c.out ? std::cout : std::cerr; }

std::string ghz(double hz) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f GHz", hz / units::kGHz);
    return buf;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
    Common common;
    std::optional<double> f_start, f_stop, power, distance;
    std::optional<std::size_t> points;
    std::optional<std::string> record;
};

int cmd_simulate(const SimulateArgs& a) {
    auto cfg = load(a.common);
    if (a.f_start.has_value() != a.f_stop.has_value()) {
        throw ValidationError("sweep", "--f-start and --f-stop must be given together");
    }
    if (a.f_start) {
        cfg.sweep.f_start_GHz = a.f_start;
        cfg.sweep.f_stop_GHz = a.f_stop;
    }
    if (a.points) cfg.sweep.n_points = *a.points;
    if (a.power) cfg.sweep.P_in_dBm = *a.power;
    if (a.distance) cfg.state.d_um = *a.distance;
    cfg.validate();

    const auto params = cfg.params_at_sweep_power();
    const auto state = cfg.tuning_state();
    const auto pin = cfg.pin_model();
    const auto trace = transmission::synthesize_sweep(cfg.sweep_config(), params, state, pin, cfg.noise_model());

    if (a.common.out) {
        io::write_trace_csv(fs::path(*a.common.out), trace);
    } else {
        io::write_trace_csv(std::cout, trace);
    }

    const double f_r = model::tuned_frequency(params, state, pin);
    const double Q_L = transmission::loaded_q(params.Qi0, params.Qe);
    const auto min_it = std::min_element(trace.power_ratio.begin(), trace.power_ratio.end());
    const double depth = 1.0 - *min_it;
    const double f_min = trace.frequencies[static_cast<std::size_t>(min_it - trace.power_ratio.begin())];
    auto& os = human(a.common);
    os << "f_r        " << ghz(f_r) << '\n'
       << "trace min  " << ghz(f_min) << '\n'
       << "depth      " << depth << '\n'
       << "linewidth  " << f_r / Q_L / units::kkHz << " kHz\n";

    if (a.record) {
        json args = common_args(a.common);
        note(args, "f_start_GHz", a.f_start);
        note(args, "f_stop_GHz", a.f_stop);
        note(args, "points", a.points);
        note(args, "power_dBm", a.power);
        note(args, "distance_um", a.distance);
        const json outputs = {{"f_r_hz", f_r},
                              {"trace_min_hz", f_min},
                              {"depth", depth},
                              {"linewidth_hz", f_r / Q_L},
                              {"n_points", trace.size()}};
        io::write_json(*a.record, io::session_record("simulate", args, io::config_to_json(cfg), cfg.seed, outputs));
    }
    return kOk;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
    Common common;
    std::string trace;
    std::optional<double> power;
};

void print_fit(std::ostream& os, const fitting::FitResult& r) {
    os << "f_r  " << ghz(r.f_r) << "  +/- " << r.uncertainties.f_r << " Hz\n"
       << "Q_L  " << r.Q_L << "  +/- " << r.uncertainties.Q_L << '\n'
       << "Q_e  " << r.Q_e << "  +/- " << r.uncertainties.Q_e << '\n'
       << "Q_i  " << r.Q_i << "  +/- " << r.uncertainties.Q_i << '\n'
       << "phi  " << r.phi << "  +/- " << r.uncertainties.phi << '\n'
       << "rms  " << r.rms_residual << " (start " << r.initial_rms_residual << "), " << r.n_iterations
       << " iterations\n";
    for (const auto& w : r.warnings) {
        os << "warning: " << w << '\n';
    }
}

int cmd_fit(const FitArgs& a) {
    auto cfg = load(a.common);
    cfg.validate();
    const auto trace = io::read_trace_csv(fs::path(a.trace), a.power);

    json args = common_args(a.common);
    args["trace"] = a.trace;
    note(args, "power_dBm", a.power);

    fitting::FitStatus status = fitting::FitStatus::ok;
    std::optional<fitting::FitResult> result;
    std::string message;
    int code = kOk;
    try {
        result = fitting::fit_resonance(trace);
    } catch (const fitting::NonPhysicalFitResult& e) {
        status = fitting::FitStatus::non_physical;
        result = e.best();
        message = e.what();
        code = kNonPhysical;
    } catch (const fitting::ConvergenceFailure& e) {
        status = fitting::FitStatus::convergence_failure;
        result = e.best();
        message = e.what();
        code = kNotConverged;
    }

    json outputs = {{"status", fitting::to_string(status)}};
    if (result) {
        outputs["fit"] = io::to_json(*result);
        print_fit(human(a.common), *result);
    }
    if (!message.empty()) {
        outputs["message"] = message;
        std::cerr << "error: " << message << '\n';
    }
    emit(a.common, io::session_record("fit", args, io::config_to_json(cfg), cfg.seed, outputs));
    return code;
}

// ---- tune -----------------------------------------------------------------

struct TuneArgs {
    Common common;
    std::optional<double> target, tolerance, distance;
    std::optional<std::string> log_csv;
};

void write_tuning_csv(const fs::path& path, const piezo::TuningSession& s) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "step,position_m,voltage,pulses,measured_f_r_hz,error_hz,time_s\n";
    for (const auto& e : s.log) {
        out << e.step << ',' << io::format_double(e.position) << ',' << io::format_double(e.voltage) << ','
            << e.pulses << ',' << io::format_double(e.measured_f_r) << ',' << io::format_double(e.error_hz) << ','
            << io::format_double(e.timestamp) << '\n';
    }
}

int cmd_tune(const TuneArgs& a) {
    auto cfg = load(a.common);
    if (a.target) cfg.controller.f_target_GHz = *a.target;
    if (a.tolerance) cfg.controller.tolerance_ppm = *a.tolerance;
    if (a.distance) cfg.state.d_um = *a.distance;
    cfg.validate();

    const auto session = piezo::tune_to_target(cfg.plant(), cfg.piezo_stage(), cfg.controller_config());

    json args = common_args(a.common);
    note(args, "target_GHz", a.target);
    note(args, "tolerance_ppm", a.tolerance);
    note(args, "distance_um", a.distance);
    note(args, "log_csv", a.log_csv);
    emit(a.common, io::session_record("tune", args, io::config_to_json(cfg), cfg.seed, io::to_json(session)));
    if (a.log_csv) {
        write_tuning_csv(*a.log_csv, session);
    }

    auto& os = human(a.common);
    os << "outcome   " << piezo::to_string(session.outcome) << '\n'
       << "f_r       " << ghz(session.final_f_r) << '\n'
       << "error     " << session.final_error_hz << " Hz\n"
       << "steps     " << session.steps << " (" << session.total_pulses << " pulses)\n";
    if (!session.diagnostics.empty()) {
        os << session.diagnostics << '\n';
    }

    switch (session.outcome) {
        case piezo::TuningOutcome::converged:
            return kOk;
        case piezo::TuningOutcome::unreachable:
            return kUnreachable;
        case piezo::TuningOutcome::step_budget_exhausted:
        case piezo::TuningOutcome::measurement_failed:
            return kNotConverged;
    }
    return kNotConverged;
}

// ---- drift ----------------------------------------------------------------

struct DriftArgs {
    Common common;
    std::string series;
    std::optional<double> f0;
};

int cmd_drift(const DriftArgs& a) {
    auto cfg = load(a.common);
    cfg.validate();
    auto series = io::read_series_csv(fs::path(a.series));
    if (series.size() < 3) {
        throw ValidationError("timestamps", "drift needs at least 3 samples");
    }
    if (a.f0) {
        series.f0 = *a.f0 * units::kGHz;
    } else {
        series.f0 = std::accumulate(series.f_r.begin(), series.f_r.end(), 0.0) / static_cast<double>(series.size());
    }
    const auto report = io::drift_report(series);

    json args = common_args(a.common);
    args["series"] = a.series;
    note(args, "f0_GHz", a.f0);
    emit(a.common, io::session_record("drift", args, io::config_to_json(cfg), cfg.seed, io::to_json(report)));

    human(a.common) << "slope          " << report.rate.slope_hz_per_hour << " Hz/h\n"
                    << "rate           " << report.rate.ppb_per_hour << " ppb/h\n"
                    << "peak-to-peak   " << report.peak_to_peak_hz << " Hz\n";
    return kOk;
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
    Common common;
    std::optional<double> f_baseline, f_closest, d_min, peak_sensitivity;
};

int cmd_calibrate(const CalibrateArgs& a) {
    auto cfg = load(a.common);
    if (a.f_baseline) cfg.pin.f_baseline_GHz = *a.f_baseline;
    if (a.f_closest) cfg.pin.f_closest_GHz = *a.f_closest;
    if (a.d_min) cfg.pin.d_min_um = *a.d_min;
    if (a.peak_sensitivity) cfg.pin.peak_sensitivity_Hz_per_m = *a.peak_sensitivity;
    cfg.validate();

    const auto anchors = cfg.pin_anchors();
    const auto pin = model::calibrate_pin_model(anchors);
    const auto params = model::ResonatorParams::from_frequency(anchors.f_baseline);
    const model::TuningState closest{anchors.d_min, 0.0};
    const double range = anchors.f_closest - anchors.f_baseline;

    json residuals = {
        {"f_closest_hz", model::tuned_frequency(params, closest, pin) - anchors.f_closest},
        {"peak_sensitivity_hz_per_m", -model::tuning_slope(params, closest, pin) - anchors.peak_sensitivity},
    };
    const double far = 600.0 * units::kMicron;
    double far_fraction = 0.0;
    if (far >= anchors.d_min && range > 0.0) {
        const double shift = model::tuned_frequency(params, {far, 0.0}, pin) - anchors.f_baseline;
        far_fraction = shift / range;
        residuals["shift_at_600um_fraction_of_range"] = far_fraction;
    }

    json args = common_args(a.common);
    note(args, "f_baseline_GHz", a.f_baseline);
    note(args, "f_closest_GHz", a.f_closest);
    note(args, "d_min_um", a.d_min);
    note(args, "peak_sensitivity_hz_per_m", a.peak_sensitivity);
    const json outputs = {{"model", io::to_json(pin)}, {"tuning_range_hz", range}, {"residuals", residuals}};
    emit(a.common, io::session_record("calibrate", args, io::config_to_json(cfg), cfg.seed, outputs));

    human(a.common) << "m_max        " << pin.m_max << '\n'
                    << "lambda       " << pin.lambda / units::kMicron << " um\n"
                    << "residual at d_min        " << residuals["f_closest_hz"].get<double>() << " Hz\n"
                    << "slope residual at d_min  " << residuals["peak_sensitivity_hz_per_m"].get<double>()
                    << " Hz/m\n"
                    << "shift at 600 um          " << 100.0 * far_fraction << " % of range\n";
    return kOk;
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return kValidation;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration error: " << e.what() << '\n';
        return kValidation;
    } catch (const NoResonance& e) {
        std::cerr << "no resonance: " << e.what() << '\n';
        return kNoResonance;
    } catch (const NonPhysicalFit& e) {
        std::cerr << "non-physical fit: " << e.what() << '\n';
        return kNonPhysical;
    } catch (const fitting::ConvergenceFailure& e) {
        std::cerr << "fit did not converge: " << e.what() << '\n';
        return kNotConverged;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tunable microwave resonator toolkit"};
    app.set_version_flag("--version", io::kToolkitVersion);
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "synthesize a transmission sweep (CSV)");
    add_common(simulate, sim.common, "trace CSV (default stdout)");
    simulate->add_option("--f-start", sim.f_start, "sweep start, GHz");
    simulate->add_option("--f-stop", sim.f_stop, "sweep stop, GHz");
    simulate->add_option("--points", sim.points, "number of sweep points");
    simulate->add_option("--power", sim.power, "input power at the resonator, dBm");
    simulate->add_option("--distance", sim.distance, "pin height, um");
    simulate->add_option("--record", sim.record, "session record (JSON)");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit the lineshape of a trace");
    add_common(fit_cmd, fit.common, "result JSON (default stdout)");
    fit_cmd->add_option("trace", fit.trace, "trace CSV")->required();
    fit_cmd->add_option("--power", fit.power, "input power of the trace, dBm");

    TuneArgs tune;
    auto* tune_cmd = app.add_subcommand("tune", "closed-loop tuning of the simulated device");
    add_common(tune_cmd, tune.common, "session JSON (default stdout)");
    tune_cmd->add_option("--target", tune.target, "target frequency, GHz");
    tune_cmd->add_option("--tolerance", tune.tolerance, "tolerance, ppm");
    tune_cmd->add_option("--distance", tune.distance, "starting pin height, um");
    tune_cmd->add_option("--log-csv", tune.log_csv, "per-step log (CSV)");

    DriftArgs drift;
    auto* drift_cmd = app.add_subcommand("drift", "drift and stability of a frequency time series");
    add_common(drift_cmd, drift.common, "report JSON (default stdout)");
    drift_cmd->add_option("series", drift.series, "time-series CSV")->required();
    drift_cmd->add_option("--f0", drift.f0, "reference frequency for fractional rates, GHz (default: series mean)");

    CalibrateArgs cal;
    auto* cal_cmd = app.add_subcommand("calibrate", "fit the pin-coupling law to anchor measurements");
    add_common(cal_cmd, cal.common, "model JSON (default stdout)");
    cal_cmd->add_option("--f-baseline", cal.f_baseline, "frequency with the pin retracted, GHz");
    cal_cmd->add_option("--f-closest", cal.f_closest, "frequency at closest approach, GHz");
    cal_cmd->add_option("--d-min", cal.d_min, "closest approach, um");
    cal_cmd->add_option("--peak-sensitivity", cal.peak_sensitivity, "|df/dd| at closest approach, Hz/m");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    if (simulate->parsed()) return guarded([&] { return cmd_simulate(sim); });
    if (fit_cmd->parsed()) return guarded([&] { return cmd_fit(fit); });
    if (tune_cmd->parsed()) return guarded([&] { return cmd_tune(tune); });
    if (drift_cmd->parsed()) return guarded([&] { return cmd_drift(drift); });
    return guarded([&] { return cmd_calibrate(cal); });
}
