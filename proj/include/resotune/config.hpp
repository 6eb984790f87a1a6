#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "resotune/piezo_control.hpp"
#include "resotune/resonator_model.hpp"
#include "resotune/transmission.hpp"

// One document describing a full virtual experiment.
//
// Values are held in the units the command line speaks (GHz, um, nm, nH) so a
// config written back as a snapshot reloads bit-identically; the accessors
// convert to the SI types the models take.
namespace resotune::io {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct ResonatorSection {
    double L0_nH = 1.0;
    std::optional<double> f_bare_GHz = 6.8278;  ///< either this or C_pF
    std::optional<double> C_pF;
    double Qi0 = 35000.0;
    double Qe = 5e5;
    double phi = 0.0;
};

struct PinSection {
    double f_baseline_GHz = 6.8278;
    double f_closest_GHz = 6.8454;
    double d_min_um = 40.0;
    double peak_sensitivity_Hz_per_m = 8.7e3 / 60e-9;
};

struct StateSection {
    double d_um = 600.0;
    double trim_shift_MHz = 0.0;
    double trim_finger_um = 0.0;  ///< extra finger length, converted through coarse_trim
};

struct NoiseSection {
    double sigma_rel = 0.0;
    double vib_amplitude_um = 0.0;
};

struct SweepSection {
    std::optional<double> f_start_GHz;  ///< both or neither of f_start/f_stop
    std::optional<double> f_stop_GHz;
    double span_linewidths = 10.0;  ///< used when f_start/f_stop are absent
    std::size_t n_points = 1601;
    double P_in_dBm = -131.0;
    double duration_s = 160.0;
};

struct PiezoSection {
    double step_size_nm = 60.0;
    double reference_voltage = 36.0;
    double min_voltage = 30.0;
    double step_at_min_voltage_nm = 12.0;
    double voltage = 36.0;
    double backlash_nm = 0.0;
};

struct ControllerSection {
    double f_target_GHz = 6.834683;
    double tolerance_ppm = 0.3;
    int max_steps = 2000;
    int steps_per_measurement = 8;
    double coarse_voltage = 36.0;
    double fine_voltage = 30.0;
    long max_pulses_per_move = 20000;
    std::size_t sweep_points = 401;
    double span_linewidths = 10.0;
    std::size_t search_points = 2001;
};

struct ExperimentConfig {
    ResonatorSection resonator;
    PinSection pin;
    StateSection state;
    NoiseSection noise;
    std::optional<transmission::TlsLossModel> tls;
    SweepSection sweep;
    PiezoSection piezo;
    ControllerSection controller;
    std::uint64_t seed = 1;

    /// Checks every embedded invariant; throws ValidationError with a dotted field path.
    void validate() const;

    [[nodiscard]] model::ResonatorParams resonator_params() const;
    [[nodiscard]] model::PinAnchors pin_anchors() const;
    [[nodiscard]] model::PinCouplingModel pin_model() const;
    [[nodiscard]] model::TuningState tuning_state() const;
    [[nodiscard]] transmission::NoiseModel noise_model() const;
    /// Explicit sweep if configured, else span_linewidths centred on the tuned resonance.
    [[nodiscard]] transmission::SweepConfig sweep_config() const;
    /// Resonator parameters with Q_i taken from the TLS model at the sweep power, when one is configured.
    [[nodiscard]] model::ResonatorParams params_at_sweep_power() const;
    [[nodiscard]] piezo::PiezoStage piezo_stage() const;
    [[nodiscard]] piezo::ControllerConfig controller_config() const;
    [[nodiscard]] piezo::Plant plant() const;
};

/// Default experiment, anchored on the measured device.
ExperimentConfig default_config();

/// Parses and validates; unknown keys are rejected. Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace resotune::io
