#pragma once

#include "spadsim/detector.hpp"
#include "spadsim/table.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spadsim {

struct ProvenanceNote {
    std::string field;
    std::string note;
    bool anchored = true; ///< false: placeholder or modelling choice, not a measured value
};

struct DetectorPreset {
    std::string name;
    std::string description;
    DetectorParams params;
    std::vector<ProvenanceNote> provenance;
};

/// Known names: "spcm-aqrh", "spd-050" (Timing output), "spd-050-ttl", "custom-aq".
/// Throws std::invalid_argument listing the available names otherwise.
DetectorPreset preset(std::string_view name);

std::vector<std::string> preset_names();

/// Dead-time recovery constant of the spcm-aqrh shift curve: the added delay
/// decays from its peak at the dead time to 100 ps at a 50 ns separation.
TimePs spcm_shift_recovery();

// ---------------------------------------------------------------------------

struct CurveInputs {
    std::vector<PiecewiseLinear::Point> jitter;   ///< separation (ps) -> FWHM (ps)
    std::vector<PiecewiseLinear::Point> shift;    ///< separation (ps) -> added delay (ps)
    std::vector<PiecewiseLinear::Point> twilight; ///< time since avalanche (ps) -> relative sensitivity
};

struct CurveFit {
    DetectorParams params;
    bool twilight_adjusted = false; ///< isotonic regression changed at least one twilight value
    std::vector<std::string> warnings;
};

/// Builds piecewise-linear tables through the given points on top of `base`.
/// Empty curves keep the base table. Twilight values are clipped to [0, 1] and
/// made non-decreasing by isotonic regression (warning recorded).
/// Throws std::invalid_argument when x is not strictly increasing or the
/// resulting parameters are invalid.
CurveFit fit_preset_from_curves(const CurveInputs& in, const DetectorParams& base);

/// Weighted least-squares non-decreasing fit (pool adjacent violators).
/// Empty weights mean unit weights.
std::vector<double> isotonic_regression(std::span<const double> y, std::span<const double> w = {});

} // namespace spadsim
