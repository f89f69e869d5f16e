#pragma once

#include "spadsim/rng.hpp"
#include "spadsim/time.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace spadsim {

/// Fixed-width binned counts over [origin, origin + size * bin_width).
struct Histogram {
    TimePs bin_width{1};
    TimePs origin;
    std::vector<std::uint64_t> counts;
    std::uint64_t underflow = 0;
    std::uint64_t overflow = 0;

    Histogram() = default;
    Histogram(TimePs bin_width, TimePs origin, std::size_t n_bins);

    std::size_t size() const { return counts.size(); }
    TimePs bin_start(std::size_t i) const { return origin + bin_width * static_cast<std::int64_t>(i); }
    double bin_center_ps(std::size_t i) const
    {
        return static_cast<double>(bin_start(i).ps()) + 0.5 * static_cast<double>(bin_width.ps());
    }
    TimePs end() const { return bin_start(counts.size()); }

    void add(TimePs v);
    std::uint64_t in_range() const;
    std::uint64_t total() const { return in_range() + underflow + overflow; }

    /// `bin_start_ps,count` rows followed by `#underflow=..,#overflow=..`.
    void write_csv(std::ostream& os) const;
};

/// Bins `values` into ceil(range / bin_width) bins starting at `origin`.
/// Throws std::invalid_argument if bin_width <= 0 or range <= 0.
Histogram build_histogram(std::span<const TimePs> values, TimePs bin_width, TimePs range, TimePs origin = TimePs::zero());

// ---------------------------------------------------------------------------

struct TacConfig {
    TimePs range;                   ///< also the conversion dead period
    double instrument_fwhm_ps = 0.0;
};

/// Single-stop time-to-amplitude converter. Each accepted start converts the
/// first stop strictly after it and within `range`; starts that arrive while a
/// conversion is in progress (less than `range` after the last accepted start)
/// are ignored.
std::vector<TimePs> tac_measure(std::span<const TimePs> starts, std::span<const TimePs> stops, const TacConfig& cfg,
                                RngStream& rng);

// ---------------------------------------------------------------------------

struct CoincidencePair {
    TimePs time;       ///< later of the two input edges
    std::size_t a = 0; ///< index into input a
    std::size_t b = 0; ///< index into input b
};

struct CoincidenceResult {
    std::vector<CoincidencePair> pairs;
    TimePs out_width;

    std::vector<TimePs> times() const;
};

/// Greedy earliest-pair AND gate: |t_a - t_b| < window, each input pulse used at most once.
CoincidenceResult coincidence(std::span<const TimePs> a, std::span<const TimePs> b, TimePs window, TimePs out_width);

// ---------------------------------------------------------------------------

struct GaussianFit {
    double peak_ps = 0.0;
    double fwhm_ps = 0.0;
    double amplitude = 0.0;  ///< fitted counts at the peak
    double residual = 0.0;   ///< chi^2 per degree of freedom over the fit window
    std::size_t window_bins = 0;
};

/// Gaussian fitted to the tallest mode. A log-parabola through the bins at
/// or above half of the tallest one gives the start values; a Poisson
/// likelihood fit over the model's +-2 sigma range refines them. With several
/// modes only the tallest one is fitted. Throws std::runtime_error when fewer
/// than five populated bins surround the mode.
GaussianFit gaussian_fit(const Histogram& h);

// ---------------------------------------------------------------------------

/// Histogram of all differences t_j - t_i (j > i) in [origin, max_lag). A
/// negative origin such as -bin_width/2 centers the bins on multiples of bin_width.
Histogram autocorrelation(std::span<const TimePs> pulses, TimePs max_lag, TimePs bin_width,
                          TimePs origin = TimePs::zero());

/// Histogram of all differences b_j - a_i in [min_lag, max_lag).
Histogram cross_correlation(std::span<const TimePs> a, std::span<const TimePs> b, TimePs min_lag, TimePs max_lag,
                            TimePs bin_width);

} // namespace spadsim
