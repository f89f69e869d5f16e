#pragma once

#include "spadsim/analysis.hpp"
#include "spadsim/detector.hpp"
#include "spadsim/qkd.hpp"
#include "spadsim/sources.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spadsim {

/// Malformed or invalid scenario configuration. The message names the field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind { Interarrival, JitterScan, PairScan, Twilight, Autocorr, Qkd, KeyRate };

std::string_view to_string(ExperimentKind k);

struct DetectorChoice {
    std::string label; ///< preset name, or "inline"
    DetectorParams params;
};

struct InterarrivalConfig {
    DetectorChoice detector;
    CwSourceConfig source;
    TimePs bin_width{1'000};
    TimePs range{600'000};
    double tac_fwhm_ps = 17.7;
    AfterpulseOptions afterpulse;
    TimePs dark_duration; ///< 0 = no dark-only run
};

struct JitterScanConfig {
    DetectorChoice detector;
    TimePs laser_period{30'000};
    double pulse_fwhm_ps = 39.0;
    double laser_fraction = 0.25;   ///< share of the incident rate coming from the laser
    std::vector<double> count_rates; ///< target detected rates, ascending; the first is the shift reference
    TimePs duration;
    TimePs bin_width{25};
    double tac_fwhm_ps = 17.7;
};

struct PairScanExperimentConfig {
    DetectorChoice detector;
    std::vector<TimePs> delta_ts;
    TimePs pair_period{1'000'000};
    double occupancy = 0.05;
    std::uint64_t pairs = 0;
    double pulse_fwhm_ps = 39.0;
    double tac_fwhm_ps = 17.7;
    std::size_t min_pairs = 1000;
    TimePs bin_width{25};
};

struct AutocorrConfig {
    DetectorChoice detector;
    PulsedSourceConfig source;
    int periods = 40;
    int bins_per_period = 16;
    std::optional<TimePs> min_lag;
};

struct QkdConfig {
    EntangledPairConfig source;
    DetectorChoice detector_a;
    DetectorChoice detector_b;
    FrameConfig frame;
    TimePs duration;
    QkdOptions options;
};

struct KeyRateConfig {
    KeyRateInputs inputs;
};

struct OutputPaths {
    std::optional<std::string> summary_json;
    std::optional<std::string> histogram_csv;
    std::optional<std::string> curve_csv;
};

struct Scenario {
    ExperimentKind kind = ExperimentKind::KeyRate;
    std::uint64_t seed = 0;
    std::variant<InterarrivalConfig, JitterScanConfig, PairScanExperimentConfig, AutocorrConfig, QkdConfig, KeyRateConfig>
        body;
    OutputPaths outputs;
};

/// Parses and fully validates a scenario. Unknown keys, wrong types, missing
/// required fields and out-of-range values all raise ConfigError.
Scenario parse_scenario(const nlohmann::json& j);

/// Reads `path` and calls parse_scenario. I/O and JSON syntax errors raise ConfigError.
Scenario load_scenario(const std::string& path);

/// Detector parameters in the config-file schema. `detector_from_json` accepts
/// a preset name, or an object with an optional "preset" base plus overrides.
nlohmann::json detector_to_json(const DetectorParams& p);
DetectorChoice detector_from_json(const nlohmann::json& j, const std::string& where);

} // namespace spadsim
