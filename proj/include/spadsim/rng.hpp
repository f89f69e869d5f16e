#pragma once

#include "spadsim/time.hpp"

#include <cstdint>
#include <random>

namespace spadsim {

/// FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2).
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

/// A named, reproducible random stream.
///
/// The pair (seed, stream id) fully determines the sample sequence. Sub-streams
/// obtained with split() are keyed on (seed, mixed id) so that adding a consumer
/// never perturbs the samples drawn by any other consumer.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    /// Independent child stream; the same (parent, sub_id) always yields the same child.
    RngStream split(std::uint64_t sub_id) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Uniform in [0, 1).
    double uniform();
    bool bernoulli(double p);
    /// Exponential with the given mean, in the caller's units.
    double exponential(double mean);
    double normal(double mean, double sigma);
    /// Geometric: number of failures before the first success with probability p.
    std::uint64_t geometric(double p);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

/// Exponentially distributed duration. Throws std::invalid_argument if mean <= 0.
TimePs sample_exponential(RngStream& rng, TimePs mean);

/// Gaussian around `center` whose width is given as FWHM in picoseconds.
/// A zero FWHM returns `center` exactly. Throws std::invalid_argument if fwhm < 0.
TimePs sample_gaussian_fwhm(RngStream& rng, TimePs center, double fwhm_ps);

/// Poisson count. Throws std::invalid_argument if mean < 0.
std::uint64_t sample_poisson(RngStream& rng, double mean);

} // namespace spadsim
