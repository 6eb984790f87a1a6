#include "resotune/formats.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string_view>

#include "resotune/config.hpp"
#include "resotune/errors.hpp"
#include "resotune/units.hpp"

namespace resotune::io {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

std::optional<double> parse_number(std::string_view cell) {
    if (cell.empty()) {
        return std::nullopt;
    }
    if (cell.front() == '+') {
        cell.remove_prefix(1);
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

double require_number(std::string_view cell, const char* column, std::size_t line) {
    const auto v = parse_number(cell);
    if (!v) {
        throw IoError(std::string("cannot parse ") + column + " value '" + std::string(cell) + "'", line);
    }
    return *v;
}

// Yields non-blank lines with their 1-based numbers; the first one is the header.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++number_;
            if (!trim(line).empty()) {
                return true;
            }
        }
        return false;
    }
    [[nodiscard]] std::size_t number() const { return number_; }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

double null_to_nan(const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", value);
    return std::string(buf, static_cast<std::size_t>(n));
}

void write_trace_csv(std::ostream& out, const transmission::SweepTrace& trace) {
    out << kTraceHeader << '\n';
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << format_double(trace.frequencies[i]) << ',' << format_double(trace.power_ratio[i]) << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const transmission::SweepTrace& trace) {
    auto out = open_output(path);
    write_trace_csv(out, trace);
}

transmission::SweepTrace read_trace_csv(std::istream& in, std::optional<double> P_in_dBm) {
    LineReader reader(in);
    std::string line;
    if (!reader.next(line)) {
        throw IoError("empty trace file");
    }
    const auto header = trim(line);
    const bool with_pout = header == kTraceHeaderWithPout;
    if (header != kTraceHeader && !with_pout) {
        throw IoError("expected header '" + std::string(kTraceHeader) + "' or '" + kTraceHeaderWithPout + "'",
                      reader.number());
    }
    const std::size_t columns = with_pout ? 3 : 2;

    transmission::SweepTrace trace;
    trace.P_in_dBm = P_in_dBm.value_or(trace.P_in_dBm);
    while (reader.next(line)) {
        const auto cells = split(line);
        const std::size_t n = reader.number();
        if (cells.size() != columns) {
            throw IoError("expected " + std::to_string(columns) + " columns, found " + std::to_string(cells.size()), n);
        }
        const double f = require_number(cells[0], "frequency_hz", n);
        double ratio;
        if (!cells[1].empty() || !with_pout) {
            ratio = require_number(cells[1], "power_ratio", n);
        } else {
            const double pout = require_number(cells[2], "pout_dbm", n);
            if (!P_in_dBm) {
                throw IoError("pout_dbm needs the input power to convert to a power ratio", n);
            }
            ratio = units::dbm_to_watts(pout) / units::dbm_to_watts(*P_in_dBm);
        }
        if (ratio < 0.0) {
            throw IoError("power_ratio must be >= 0", n);
        }
        if (!trace.frequencies.empty() && !(f > trace.frequencies.back())) {
            throw IoError("frequencies must be strictly increasing", n);
        }
        trace.frequencies.push_back(f);
        trace.power_ratio.push_back(ratio);
    }
    if (trace.frequencies.empty()) {
        throw IoError("trace has a header but no data rows");
    }
    return trace;
}

transmission::SweepTrace read_trace_csv(const std::filesystem::path& path, std::optional<double> P_in_dBm) {
    auto in = open_input(path);
    try {
        return read_trace_csv(in, P_in_dBm);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_series_csv(std::ostream& out, const stability::FrequencyTimeSeries& series) {
    out << kSeriesHeader << '\n';
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << format_double(series.timestamps[i]) << ',' << format_double(series.f_r[i]) << '\n';
    }
}

void write_series_csv(const std::filesystem::path& path, const stability::FrequencyTimeSeries& series) {
    auto out = open_output(path);
    write_series_csv(out, series);
}

stability::FrequencyTimeSeries read_series_csv(std::istream& in) {
    LineReader reader(in);
    std::string line;
    if (!reader.next(line)) {
        throw IoError("empty time-series file");
    }
    if (trim(line) != kSeriesHeader) {
        throw IoError("expected header '" + std::string(kSeriesHeader) + "'", reader.number());
    }
    stability::FrequencyTimeSeries series;
    while (reader.next(line)) {
        const auto cells = split(line);
        const std::size_t n = reader.number();
        if (cells.size() != 2) {
            throw IoError("expected 2 columns, found " + std::to_string(cells.size()), n);
        }
        const double t = require_number(cells[0], "time_s", n);
        const double f = require_number(cells[1], "f_r_hz", n);
        if (!series.timestamps.empty() && !(t > series.timestamps.back())) {
            throw IoError("timestamps must be strictly increasing", n);
        }
        series.timestamps.push_back(t);
        series.f_r.push_back(f);
    }
    return series;
}

stability::FrequencyTimeSeries read_series_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return read_series_csv(in);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

json to_json(const fitting::FitResult& fit) {
    json j;
    j["f_r_hz"] = fit.f_r;
    j["Q_L"] = fit.Q_L;
    j["Q_e"] = fit.Q_e;
    j["Q_i"] = fit.Q_i;
    j["phi"] = fit.phi;
    j["uncertainties"] = {{"f_r_hz", fit.uncertainties.f_r},
                          {"Q_L", fit.uncertainties.Q_L},
                          {"Q_e", fit.uncertainties.Q_e},
                          {"Q_i", fit.uncertainties.Q_i},
                          {"phi", fit.uncertainties.phi}};
    j["rms_residual"] = fit.rms_residual;
    j["initial_rms_residual"] = fit.initial_rms_residual;
    j["n_iterations"] = fit.n_iterations;
    j["converged"] = fit.converged;
    j["low_confidence"] = fit.low_confidence;
    j["warnings"] = fit.warnings;
    return j;
}

fitting::FitResult fit_result_from_json(const json& j) {
    try {
        fitting::FitResult fit;
        fit.f_r = null_to_nan(j.at("f_r_hz"));
        fit.Q_L = null_to_nan(j.at("Q_L"));
        fit.Q_e = null_to_nan(j.at("Q_e"));
        fit.Q_i = null_to_nan(j.at("Q_i"));
        fit.phi = null_to_nan(j.at("phi"));
        const json& u = j.at("uncertainties");
        fit.uncertainties = {null_to_nan(u.at("f_r_hz")), null_to_nan(u.at("Q_L")), null_to_nan(u.at("Q_e")),
                             null_to_nan(u.at("Q_i")), null_to_nan(u.at("phi"))};
        fit.rms_residual = null_to_nan(j.at("rms_residual"));
        fit.initial_rms_residual = null_to_nan(j.at("initial_rms_residual"));
        fit.n_iterations = j.at("n_iterations").get<int>();
        fit.converged = j.at("converged").get<bool>();
        fit.low_confidence = j.at("low_confidence").get<bool>();
        fit.warnings = j.at("warnings").get<std::vector<std::string>>();
        return fit;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed fit result: ") + e.what());
    }
}

json to_json(const piezo::TuningSession& session) {
    json log = json::array();
    for (const auto& e : session.log) {
        log.push_back({{"step", e.step},
                       {"position_m", e.position},
                       {"voltage", e.voltage},
                       {"pulses", e.pulses},
                       {"measured_f_r_hz", e.measured_f_r},
                       {"error_hz", e.error_hz},
                       {"timestamp_s", e.timestamp},
                       {"sweep_center_hz", e.sweep_center},
                       {"sweep_span_hz", e.sweep_span},
                       {"fit_ok", e.fit_ok},
                       {"fit_rms", e.fit_rms},
                       {"fit_iterations", e.fit_iterations},
                       {"note", e.note}});
    }
    return {{"outcome", piezo::to_string(session.outcome)},
            {"final_f_r_hz", session.final_f_r},
            {"final_error_hz", session.final_error_hz},
            {"final_position_m", session.final_position},
            {"steps", session.steps},
            {"total_pulses", session.total_pulses},
            {"diagnostics", session.diagnostics},
            {"log", std::move(log)}};
}

json to_json(const model::PinCouplingModel& pin) {
    return {{"m_max", pin.m_max}, {"lambda_m", pin.lambda}, {"d_min_m", pin.d_min}};
}

DriftReport drift_report(const stability::FrequencyTimeSeries& series) {
    DriftReport r;
    r.rate = stability::drift_rate(series);
    r.samples = series.size();
    r.f0 = series.f0;
    r.duration_s = series.timestamps.back() - series.timestamps.front();
    r.peak_to_peak_hz = stability::peak_to_peak_deviation(series);
    r.allan = stability::allan_deviation(series);
    return r;
}

json to_json(const DriftReport& r) {
    json allan = json::array();
    for (const auto& p : r.allan) {
        allan.push_back({{"tau_s", p.tau_s}, {"deviation", p.deviation}});
    }
    return {{"samples", r.samples},
            {"f0_hz", r.f0},
            {"duration_s", r.duration_s},
            {"slope_hz_per_hour", r.rate.slope_hz_per_hour},
            {"ppb_per_hour", r.rate.ppb_per_hour},
            {"peak_to_peak_hz", r.peak_to_peak_hz},
            {"allan_deviation", std::move(allan)}};
}

json session_record(const std::string& command, const json& arguments, const json& config_snapshot,
                    std::uint64_t seed, const json& outputs) {
    return {{"toolkit_version", kToolkitVersion},
            {"command", command},
            {"arguments", arguments},
            {"seed", seed},
            {"config", config_snapshot},
            {"outputs", outputs}};
}

void write_json(const std::filesystem::path& path, const json& doc) {
    auto out = open_output(path);
    out << doc.dump(2) << '\n';
}

}  // namespace resotune::io
