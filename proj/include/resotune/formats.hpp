#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resotune/fitting.hpp"
#include "resotune/piezo_control.hpp"
#include "resotune/stability.hpp"
#include "resotune/transmission.hpp"

// File formats shared by the command-line verbs.
//
//   trace CSV        frequency_hz,power_ratio            (optional third column pout_dbm on ingest)
//   time series CSV  time_s,f_r_hz
//
// Numbers are written with 17 significant digits so a read reproduces the
// written doubles exactly.
namespace resotune::io {

inline constexpr const char* kTraceHeader = "frequency_hz,power_ratio";
inline constexpr const char* kTraceHeaderWithPout = "frequency_hz,power_ratio,pout_dbm";
inline constexpr const char* kSeriesHeader = "time_s,f_r_hz";

/// Formats a double with 17 significant digits.
std::string format_double(double value);

void write_trace_csv(std::ostream& out, const transmission::SweepTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const transmission::SweepTrace& trace);

/// Reads a trace. Rows whose power_ratio cell is empty are derived from pout_dbm
/// and `P_in_dBm`, which is then required. Throws IoError carrying the line number.
transmission::SweepTrace read_trace_csv(std::istream& in, std::optional<double> P_in_dBm = std::nullopt);
transmission::SweepTrace read_trace_csv(const std::filesystem::path& path,
                                        std::optional<double> P_in_dBm = std::nullopt);

void write_series_csv(std::ostream& out, const stability::FrequencyTimeSeries& series);
void write_series_csv(const std::filesystem::path& path, const stability::FrequencyTimeSeries& series);

/// Reads `time_s,f_r_hz`; f0 is left at zero for the caller to set.
stability::FrequencyTimeSeries read_series_csv(std::istream& in);
stability::FrequencyTimeSeries read_series_csv(const std::filesystem::path& path);

nlohmann::json to_json(const fitting::FitResult& fit);
fitting::FitResult fit_result_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const piezo::TuningSession& session);
nlohmann::json to_json(const model::PinCouplingModel& pin);

struct DriftReport {
    std::size_t samples = 0;
    double f0 = 0.0;
    double duration_s = 0.0;
    stability::DriftRate rate;
    double peak_to_peak_hz = 0.0;
    std::vector<stability::AllanPoint> allan;
};

DriftReport drift_report(const stability::FrequencyTimeSeries& series);
nlohmann::json to_json(const DriftReport& report);

/// Provenance wrapper written by every verb that emits JSON.
nlohmann::json session_record(const std::string& command, const nlohmann::json& arguments,
                              const nlohmann::json& config_snapshot, std::uint64_t seed,
                              const nlohmann::json& outputs);

/// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace resotune::io
