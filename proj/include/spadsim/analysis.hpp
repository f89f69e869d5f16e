#pragma once

#include "spadsim/instruments.hpp"
#include "spadsim/time.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spadsim {

// ---------------------------------------------------------------------------
// Dead time and afterpulsing from an interarrival histogram

/// Onset of the interarrival distribution. The plateau level is the median of
/// the populated bins just after the first rise; the onset bin is the first one
/// above 10% of that level, refined inside the bin by its fill fraction.
/// Throws std::runtime_error when the histogram is empty or never rises.
TimePs estimate_dead_time(const Histogram& h);

struct AfterpulseOptions {
    TimePs expected_tau_trap{32'000};
    /// Start of the background-only tail. Default: tau_dead + 5 * expected_tau_trap.
    std::optional<TimePs> background_cut;
    /// Bins right after tau_dead left out of the excess fit (twilight pile-up).
    int skip_bins = 1;
    /// Reduced chi-square above which a single lifetime is judged inadequate.
    double residual_threshold = 1.5;
};

struct AfterpulseResult {
    double p_afterpulse = 0.0;
    double p_error = 0.0;
    TimePs tau_trap;
    double residual = 0.0;         ///< reduced chi-square of the excess fit
    bool single_lifetime_ok = true;
    bool significant = false;      ///< excess at the expected lifetime above 3 standard errors
    double background_tau_ps = 0.0; ///< decay constant of the tail background (0 = flat)
};

/// Tail-background subtraction followed by a single-exponential fit of the
/// excess just after the dead time. p_afterpulse is the integrated excess over
/// the total histogram count.
/// Throws std::runtime_error on a significantly negative excess, a fit that
/// runs into its search bounds, fewer than 1000 intervals, or a histogram
/// shorter than tau_dead + 10 * expected_tau_trap.
AfterpulseResult afterpulse_spectroscopy(const Histogram& h, TimePs tau_dead, const AfterpulseOptions& opt = {});

// ---------------------------------------------------------------------------
// Pair-scan curves

/// Ground-truth tallies for one pulse-pair separation.
struct PairCounts {
    TimePs delta_t;
    std::uint64_t pairs = 0;          ///< emitted pulse pairs
    std::uint64_t first_detected = 0; ///< first-slot photon produced an output pulse
    std::uint64_t both_detected = 0;  ///< ... and so did the second-slot photon
};

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
    double err = 0.0;
};

struct TwilightCurve {
    std::vector<CurvePoint> points; ///< x = delta_t (ps), y = relative efficiency
    std::vector<TimePs> missing;    ///< separations without first-photon detections
};

/// P(second detected | first detected) / P(first detected) per separation.
TwilightCurve twilight_curve(std::span<const PairCounts> scan);

/// 10%-90% rise width of a relative-efficiency curve, with linear interpolation
/// between points. Throws std::runtime_error if the curve never reaches 90%.
TimePs twilight_window(const TwilightCurve& curve);

struct PairIntervals {
    TimePs delta_t;
    std::vector<TimePs> intervals; ///< measured second-minus-first output time
};

struct ShiftJitterPoint {
    TimePs delta_t;
    double shift_ps = 0.0; ///< mean of (interval - delta_t)
    double fwhm_ps = 0.0;  ///< Gaussian-fit FWHM of the interval distribution
    std::size_t n = 0;
};

struct ShiftJitterCurve {
    std::vector<ShiftJitterPoint> points;
    std::vector<TimePs> missing;
};

ShiftJitterCurve shift_and_jitter_vs_dt(std::span<const PairIntervals> scan, std::size_t min_pairs = 1000,
                                        TimePs bin_width = TimePs{25});

// ---------------------------------------------------------------------------
// QKD-facing metrics

/// Visibility (P - V) / (P + V) of the periodic structure of an autocorrelation
/// histogram, clamped to [0, 1]. P averages the bins containing m * period, V
/// the bins containing (m + 1/2) * period, both only for lags above `min_lag`.
/// Throws std::invalid_argument if period < 2 bins, std::runtime_error if no
/// complete period lies above min_lag or the histogram is empty there.
/// The error treats the two sums as Poisson counts.
struct Visibility {
    double value = 0.0;
    double error = 0.0;
};

Visibility distinguishability(const Histogram& ac, TimePs period, TimePs min_lag = TimePs::zero());

/// Excess of a correlation histogram just after the dead time over the local
/// level. The cluster is [tau_dead, tau_dead + 2 ns); the baseline is an
/// exponential fitted to [tau_dead + 3 ns, min(1.75 tau_dead, tau_dead + 30 ns))
/// and extrapolated under the cluster. Bins are selected by their centers.
struct PeakExcess {
    double cluster = 0.0;  ///< counts in the cluster
    double expected = 0.0; ///< baseline prediction for the same bins
    double z = 0.0;        ///< (cluster - expected) / standard error
};

/// Throws std::runtime_error if either window holds fewer than 1 or 4 bins respectively.
PeakExcess dead_time_peak(const Histogram& xc, TimePs tau_dead);

/// coincidences / (singles_a + singles_b). Throws std::invalid_argument on a zero denominator.
double heralding_efficiency(std::uint64_t coincidences, std::uint64_t singles_a, std::uint64_t singles_b);

struct KeyRateInputs {
    double m_channels = 1.0;
    double eta = 1.0;
    double n_mean = 1.0;   ///< photons per time bin
    double xi = 1.0;       ///< bits per generated coincidence
    TimePs delta_t;        ///< bin width
};

void validate(const KeyRateInputs& k);

/// R = M * eta^2 * n_mean * xi / delta_t in bits/s.
double secret_key_rate(const KeyRateInputs& k);

// ---------------------------------------------------------------------------

/// `x,y[,err]` rows.
void write_curve_csv(std::ostream& os, std::span<const CurvePoint> pts, std::string_view x_name,
                     std::string_view y_name, bool with_err);

} // namespace spadsim
