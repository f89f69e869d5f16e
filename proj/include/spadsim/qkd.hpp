#pragma once

#include "spadsim/analysis.hpp"
#include "spadsim/detector.hpp"
#include "spadsim/instruments.hpp"
#include "spadsim/rng.hpp"
#include "spadsim/sources.hpp"
#include "spadsim/time.hpp"

#include <cstdint>
#include <optional>

namespace spadsim {

/// Time-bin framing: a frame is bins_per_frame consecutive bins of bin_width.
struct FrameConfig {
    TimePs bin_width;
    std::uint32_t bins_per_frame = 1024;

    double rep_rate() const { return 1e12 / static_cast<double>(bin_width.ps()); }
    /// Throws std::invalid_argument unless bin_width > 0 and bins_per_frame is a power of two >= 2.
    void validate() const;
};

struct BinIndex {
    std::uint64_t frame = 0;
    std::uint32_t bin = 0;

    bool operator==(const BinIndex&) const = default;
};

/// frame = floor(t / (N dt)), bin = floor((t mod N dt) / dt). Throws std::invalid_argument for t < 0.
BinIndex bin_assign(TimePs t, const FrameConfig& f);

/// coincidence_rate * log2(n_bins). Throws std::invalid_argument if n_bins < 2.
double raw_key_rate(double coincidence_rate, std::uint64_t n_bins);

/// Longest dead interval the detector can impose: the fully elongated dead
/// time, or the blanking period if that is longer.
TimePs blind_period(const DetectorParams& p);

struct QkdOptions {
    /// Lags above which the autocorrelation visibility is evaluated. Default:
    /// the longer of the two arms' dead (or blanking) periods plus 2 ns.
    std::optional<TimePs> ac_min_lag;
    int ac_periods = 40;          ///< autocorrelation span beyond ac_min_lag, in pulse periods
    int ac_bins_per_period = 16;
    TimePs xcorr_range{120'000};  ///< cross-correlation covers [-range, +range)
    /// Cross-correlation bin width. Default: one pulse period, centered on the comb.
    std::optional<TimePs> xcorr_bin;
};

struct QkdReport {
    double duration_s = 0.0;
    double rep_rate = 0.0;
    std::uint32_t bins_per_frame = 0;

    std::uint64_t pairs_created = 0;
    std::uint64_t singles_a = 0;
    std::uint64_t singles_b = 0;
    std::uint64_t coincidences = 0;      ///< windowed, window = bin width
    std::uint64_t true_coincidences = 0; ///< windowed coincidences between partner photons
    double singles_rate_a = 0.0;         ///< per detector
    double singles_rate_b = 0.0;
    double coincidence_rate = 0.0;
    double raw_key_rate = 0.0;

    double timing_ber = 0.0; ///< against ground truth; non-partner coincidences count as errors
    double lab_ber = 0.0;    ///< Alice bin != Bob bin
    Visibility distinguishability_a;
    Visibility distinguishability_b;
    double heralding = 0.0;

    TimePs latency_a; ///< calibrated framing offsets
    TimePs latency_b;
    Histogram xcorr;  ///< Bob minus Alice pulse times
};

/// Pair source -> two detectors -> framing and metrics. `f.bin_width` must
/// equal the source period; `duration` overrides `source.duration`.
QkdReport run_qkd_scenario(const EntangledPairConfig& source, const DetectorParams& det_a, const DetectorParams& det_b,
                           const FrameConfig& f, TimePs duration, RngStream& rng, const QkdOptions& opt = {});

} // namespace spadsim
