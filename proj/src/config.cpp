#include "resotune/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "resotune/errors.hpp"
#include "resotune/units.hpp"

namespace resotune::io {

using nlohmann::json;

namespace {

// Reads members of one JSON object, remembering which keys were consumed.
class SectionReader {
public:
    SectionReader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) {
            throw ValidationError(path_.empty() ? "<root>" : path_, "expected a JSON object");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return doc_.contains(key); }

    template <typename T>
    void get(const char* key, T& out) {
        if (!doc_.contains(key)) {
            return;
        }
        used_.insert(key);
        const json& v = doc_.at(key);
        if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                throw ValidationError(field(key), "expected a number");
            }
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) {
                throw ValidationError(field(key), "expected a non-negative integer");
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) {
                throw ValidationError(field(key), "expected an integer");
            }
        }
        out = v.get<T>();
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        if (!doc_.contains(key)) {
            return;
        }
        T value{};
        get(key, value);
        out = value;
    }

    const json* section(const char* key) {
        if (!doc_.contains(key)) {
            return nullptr;
        }
        used_.insert(key);
        return &doc_.at(key);
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void reject_unknown() const {
        for (const auto& item : doc_.items()) {
            if (!used_.contains(item.key())) {
                throw ValidationError(field(item.key()), "unknown key");
            }
        }
    }

private:
    const json& doc_;
    std::string path_;
    std::set<std::string> used_;
};

// Re-raises a model-level ValidationError with the config section prefixed to its field.
template <typename Fn>
void within(const std::string& section, Fn&& fn) {
    try {
        fn();
    } catch (const ValidationError& e) {
        throw ValidationError(section + "." + e.field(), e.reason());
    } catch (const CalibrationError& e) {
        throw ValidationError(section, e.what());
    } catch (const DomainError& e) {
        throw ValidationError(section, e.what());
    }
}

void require(bool ok, const std::string& field, const char* what) {
    if (!ok) {
        throw ValidationError(field, what);
    }
}

}  // namespace

model::ResonatorParams ExperimentConfig::resonator_params() const {
    model::ResonatorParams p;
    p.L0 = resonator.L0_nH * units::kNanohenry;
    if (resonator.C_pF) {
        p.C = *resonator.C_pF * units::kPicofarad;
    } else if (const double f = resonator.f_bare_GHz.value_or(0.0) * units::kGHz; f > 0.0 && p.L0 > 0.0) {
        const double omega = units::two_pi * f;
        p.C = 1.0 / (omega * omega * p.L0);
    }
    p.Qi0 = resonator.Qi0;
    p.Qe = resonator.Qe;
    p.phi = resonator.phi;
    return p;
}

model::PinAnchors ExperimentConfig::pin_anchors() const {
    return {pin.f_baseline_GHz * units::kGHz, pin.f_closest_GHz * units::kGHz, pin.d_min_um * units::kMicron,
            pin.peak_sensitivity_Hz_per_m};
}

model::PinCouplingModel ExperimentConfig::pin_model() const { return model::calibrate_pin_model(pin_anchors()); }

model::TuningState ExperimentConfig::tuning_state() const {
    model::TuningState s{state.d_um * units::kMicron, state.trim_shift_MHz * units::kMHz};
    return model::apply_coarse_trim(s, state.trim_finger_um);
}

transmission::NoiseModel ExperimentConfig::noise_model() const {
    return {noise.sigma_rel, noise.vib_amplitude_um * units::kMicron, seed};
}

model::ResonatorParams ExperimentConfig::params_at_sweep_power() const {
    const auto p = resonator_params();
    return tls ? transmission::params_at_power(p, *tls, sweep.P_in_dBm) : p;
}

transmission::SweepConfig ExperimentConfig::sweep_config() const {
    transmission::SweepConfig s;
    s.n_points = sweep.n_points;
    s.P_in_dBm = sweep.P_in_dBm;
    s.duration_s = sweep.duration_s;
    if (sweep.f_start_GHz && sweep.f_stop_GHz) {
        s.f_start = *sweep.f_start_GHz * units::kGHz;
        s.f_stop = *sweep.f_stop_GHz * units::kGHz;
    } else {
        const auto params = params_at_sweep_power();
        const double f_r = model::tuned_frequency(params, tuning_state(), pin_model());
        const double linewidth = f_r / transmission::loaded_q(params.Qi0, params.Qe);
        s.f_start = f_r - 0.5 * sweep.span_linewidths * linewidth;
        s.f_stop = f_r + 0.5 * sweep.span_linewidths * linewidth;
    }
    return s;
}

piezo::PiezoStage ExperimentConfig::piezo_stage() const {
    piezo::PiezoStage st;
    st.step_size = piezo.step_size_nm * units::kNanometer;
    st.reference_voltage = piezo.reference_voltage;
    st.min_voltage = piezo.min_voltage;
    st.step_at_min_voltage = piezo.step_at_min_voltage_nm * units::kNanometer;
    st.voltage = piezo.voltage;
    st.backlash = piezo.backlash_nm * units::kNanometer;
    st.position = state.d_um * units::kMicron;
    st.min_position = pin.d_min_um * units::kMicron;
    return st;
}

piezo::ControllerConfig ExperimentConfig::controller_config() const {
    piezo::ControllerConfig c;
    c.f_target = controller.f_target_GHz * units::kGHz;
    c.tolerance_ppm = controller.tolerance_ppm;
    c.max_steps = controller.max_steps;
    c.steps_per_measurement = controller.steps_per_measurement;
    c.coarse_voltage = controller.coarse_voltage;
    c.fine_voltage = controller.fine_voltage;
    c.max_pulses_per_move = controller.max_pulses_per_move;
    c.sweep_points = controller.sweep_points;
    c.span_linewidths = controller.span_linewidths;
    c.search_points = controller.search_points;
    c.P_in_dBm = sweep.P_in_dBm;
    c.sweep_duration_s = sweep.duration_s;
    return c;
}

piezo::Plant ExperimentConfig::plant() const {
    return {params_at_sweep_power(), tuning_state(), pin_model(), noise_model()};
}

void ExperimentConfig::validate() const {
    require(resonator.f_bare_GHz.has_value() != resonator.C_pF.has_value(), "resonator",
            "give exactly one of f_bare_GHz and C_pF");
    within("resonator", [&] { resonator_params().validate(); });
    model::PinCouplingModel pm;
    within("pin", [&] {
        pm = pin_model();
        pm.validate();
    });
    require(std::isfinite(state.trim_finger_um) && state.trim_finger_um >= 0.0, "state.trim_finger_um",
            "must be >= 0");
    within("state", [&] {
        const auto s = tuning_state();
        s.validate(pm);
        (void)model::tuned_frequency(resonator_params(), s, pm);
    });
    within("noise", [&] { noise_model().validate(); });
    if (tls) {
        within("tls", [&] { tls->validate(); });
    }
    require(sweep.f_start_GHz.has_value() == sweep.f_stop_GHz.has_value(), "sweep",
            "give both or neither of f_start_GHz and f_stop_GHz");
    require(std::isfinite(sweep.span_linewidths) && sweep.span_linewidths > 0.0, "sweep.span_linewidths",
            "must be > 0");
    within("sweep", [&] { sweep_config().validate(); });
    within("piezo", [&] { piezo_stage().validate(); });
    within("controller", [&] { controller_config().validate(); });
}

ExperimentConfig default_config() { return {}; }

ExperimentConfig config_from_json(const json& doc) {
    ExperimentConfig c;
    SectionReader root(doc, "");
    root.get("seed", c.seed);

    if (const json* s = root.section("resonator")) {
        SectionReader r(*s, "resonator");
        if (r.has("C_pF") && !r.has("f_bare_GHz")) {
            c.resonator.f_bare_GHz.reset();
        }
        r.get("L0_nH", c.resonator.L0_nH);
        r.get("f_bare_GHz", c.resonator.f_bare_GHz);
        r.get("C_pF", c.resonator.C_pF);
        r.get("Qi0", c.resonator.Qi0);
        r.get("Qe", c.resonator.Qe);
        r.get("phi", c.resonator.phi);
        r.reject_unknown();
    }
    if (const json* s = root.section("pin")) {
        SectionReader r(*s, "pin");
        r.get("f_baseline_GHz", c.pin.f_baseline_GHz);
        r.get("f_closest_GHz", c.pin.f_closest_GHz);
        r.get("d_min_um", c.pin.d_min_um);
        r.get("peak_sensitivity_Hz_per_m", c.pin.peak_sensitivity_Hz_per_m);
        r.reject_unknown();
    }
    if (const json* s = root.section("state")) {
        SectionReader r(*s, "state");
        r.get("d_um", c.state.d_um);
        r.get("trim_shift_MHz", c.state.trim_shift_MHz);
        r.get("trim_finger_um", c.state.trim_finger_um);
        r.reject_unknown();
    }
    if (const json* s = root.section("noise")) {
        SectionReader r(*s, "noise");
        r.get("sigma_rel", c.noise.sigma_rel);
        r.get("vib_amplitude_um", c.noise.vib_amplitude_um);
        r.reject_unknown();
    }
    if (const json* s = root.section("tls"); s != nullptr && !s->is_null()) {
        SectionReader r(*s, "tls");
        transmission::TlsLossModel tls;
        r.get("q_tls_low", tls.q_tls_low);
        r.get("P_sat_dBm", tls.P_sat_dBm);
        r.get("q_other", tls.q_other);
        r.reject_unknown();
        c.tls = tls;
    }
    if (const json* s = root.section("sweep")) {
        SectionReader r(*s, "sweep");
        r.get("f_start_GHz", c.sweep.f_start_GHz);
        r.get("f_stop_GHz", c.sweep.f_stop_GHz);
        r.get("span_linewidths", c.sweep.span_linewidths);
        r.get("n_points", c.sweep.n_points);
        r.get("P_in_dBm", c.sweep.P_in_dBm);
        r.get("duration_s", c.sweep.duration_s);
        r.reject_unknown();
    }
    if (const json* s = root.section("piezo")) {
        SectionReader r(*s, "piezo");
        r.get("step_size_nm", c.piezo.step_size_nm);
        r.get("reference_voltage", c.piezo.reference_voltage);
        r.get("min_voltage", c.piezo.min_voltage);
        r.get("step_at_min_voltage_nm", c.piezo.step_at_min_voltage_nm);
        r.get("voltage", c.piezo.voltage);
        r.get("backlash_nm", c.piezo.backlash_nm);
        r.reject_unknown();
    }
    if (const json* s = root.section("controller")) {
        SectionReader r(*s, "controller");
        r.get("f_target_GHz", c.controller.f_target_GHz);
        r.get("tolerance_ppm", c.controller.tolerance_ppm);
        r.get("max_steps", c.controller.max_steps);
        r.get("steps_per_measurement", c.controller.steps_per_measurement);
        r.get("coarse_voltage", c.controller.coarse_voltage);
        r.get("fine_voltage", c.controller.fine_voltage);
        r.get("max_pulses_per_move", c.controller.max_pulses_per_move);
        r.get("sweep_points", c.controller.sweep_points);
        r.get("span_linewidths", c.controller.span_linewidths);
        r.get("search_points", c.controller.search_points);
        r.reject_unknown();
    }
    root.reject_unknown();
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json doc;
    doc["seed"] = c.seed;

    json& r = doc["resonator"];
    r["L0_nH"] = c.resonator.L0_nH;
    if (c.resonator.f_bare_GHz) {
        r["f_bare_GHz"] = *c.resonator.f_bare_GHz;
    }
    if (c.resonator.C_pF) {
        r["C_pF"] = *c.resonator.C_pF;
    }
    r["Qi0"] = c.resonator.Qi0;
    r["Qe"] = c.resonator.Qe;
    r["phi"] = c.resonator.phi;

    doc["pin"] = {{"f_baseline_GHz", c.pin.f_baseline_GHz},
                  {"f_closest_GHz", c.pin.f_closest_GHz},
                  {"d_min_um", c.pin.d_min_um},
                  {"peak_sensitivity_Hz_per_m", c.pin.peak_sensitivity_Hz_per_m}};
    doc["state"] = {{"d_um", c.state.d_um},
                    {"trim_shift_MHz", c.state.trim_shift_MHz},
                    {"trim_finger_um", c.state.trim_finger_um}};
    doc["noise"] = {{"sigma_rel", c.noise.sigma_rel}, {"vib_amplitude_um", c.noise.vib_amplitude_um}};
    if (c.tls) {
        doc["tls"] = {{"q_tls_low", c.tls->q_tls_low}, {"P_sat_dBm", c.tls->P_sat_dBm}, {"q_other", c.tls->q_other}};
    }

    json& s = doc["sweep"];
    if (c.sweep.f_start_GHz) {
        s["f_start_GHz"] = *c.sweep.f_start_GHz;
    }
    if (c.sweep.f_stop_GHz) {
        s["f_stop_GHz"] = *c.sweep.f_stop_GHz;
    }
    s["span_linewidths"] = c.sweep.span_linewidths;
    s["n_points"] = c.sweep.n_points;
    s["P_in_dBm"] = c.sweep.P_in_dBm;
    s["duration_s"] = c.sweep.duration_s;

    doc["piezo"] = {{"step_size_nm", c.piezo.step_size_nm},
                    {"reference_voltage", c.piezo.reference_voltage},
                    {"min_voltage", c.piezo.min_voltage},
                    {"step_at_min_voltage_nm", c.piezo.step_at_min_voltage_nm},
                    {"voltage", c.piezo.voltage},
                    {"backlash_nm", c.piezo.backlash_nm}};
    doc["controller"] = {{"f_target_GHz", c.controller.f_target_GHz},
                         {"tolerance_ppm", c.controller.tolerance_ppm},
                         {"max_steps", c.controller.max_steps},
                         {"steps_per_measurement", c.controller.steps_per_measurement},
                         {"coarse_voltage", c.controller.coarse_voltage},
                         {"fine_voltage", c.controller.fine_voltage},
                         {"max_pulses_per_move", c.controller.max_pulses_per_move},
                         {"sweep_points", c.controller.sweep_points},
                         {"span_linewidths", c.controller.span_linewidths},
                         {"search_points", c.controller.search_points}};
    return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

}  // namespace resotune::io
