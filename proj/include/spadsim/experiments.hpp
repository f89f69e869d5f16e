#pragma once

#include "spadsim/analysis.hpp"
#include "spadsim/config.hpp"
#include "spadsim/instruments.hpp"
#include "spadsim/qkd.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spadsim {

struct DarkMeasurement {
    std::uint64_t counts = 0;
    double duration_s = 0.0;
    double rate = 0.0;
    double rate_error = 0.0; ///< Poisson, sqrt(counts) / duration
};

struct InterarrivalResult {
    Histogram histogram;        ///< consecutive output intervals, TAC jitter applied
    std::uint64_t detected = 0;
    double count_rate = 0.0;
    TimePs dead_time;
    AfterpulseResult afterpulse;
    std::optional<DarkMeasurement> dark;
};

/// CW light -> detector -> start/stop on consecutive pulses -> dead time and
/// afterpulse analysis; optionally a separate run in darkness.
InterarrivalResult run_interarrival(const InterarrivalConfig& c, std::uint64_t seed);

struct JitterPoint {
    double target_rate = 0.0;
    double measured_rate = 0.0;
    std::uint64_t laser_events = 0; ///< TAC conversions recorded
    double peak_ps = 0.0;           ///< fitted peak position within the laser period
    double shift_ps = 0.0;          ///< peak minus peak at the first rate
    double fwhm_ps = 0.0;
};

struct JitterScanResult {
    std::vector<JitterPoint> points;
};

/// Photon rate that yields `detected_rate` output pulses for a non-paralyzable
/// dead time, divided by the efficiency.
double incident_rate_for(double detected_rate, const DetectorParams& p);

JitterScanResult run_jitter_scan(const JitterScanConfig& c, std::uint64_t seed);

struct PairScanPoint {
    PairCounts counts;
    PairIntervals intervals;              ///< TAC jitter applied
    std::optional<TimePs> min_interval;   ///< smallest raw second-minus-first output gap
    std::uint64_t early_second = 0;       ///< second pulses earlier than tau_dead0 after the first
};

struct PairScanResult {
    std::vector<PairScanPoint> points;
    TwilightCurve twilight;
    std::optional<TimePs> twilight_window; ///< absent when the curve never reaches 90%
    ShiftJitterCurve shift_jitter;
};

PairScanResult run_pair_scan(const PairScanExperimentConfig& c, std::uint64_t seed);

struct AutocorrResult {
    Histogram histogram;
    std::uint64_t detected = 0;
    double count_rate = 0.0;
    Visibility distinguishability;
};

AutocorrResult run_autocorr(const AutocorrConfig& c, std::uint64_t seed);

QkdReport run_qkd(const QkdConfig& c, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct Metric {
    std::string name;
    double value = 0.0;
    std::optional<double> error;
    std::string unit;
};

struct ScenarioOutput {
    std::vector<Metric> metrics;
    nlohmann::json summary;
    std::optional<std::string> histogram_csv;
    std::optional<std::string> curve_csv;
};

/// Runs one scenario. Only the outputs declared in `s.outputs` are rendered.
/// Analysis failures propagate as std::runtime_error.
ScenarioOutput run_scenario(const Scenario& s);

/// "name = value ± error unit".
std::string format_metric(const Metric& m);

} // namespace spadsim
