#include "spadsim/rng.hpp"

#include <fmt/core.h>

#include <stdexcept>

namespace spadsim {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id)
{
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32),
        0x5350ADu};
    return std::mt19937_64(seq);
}

std::uint64_t mix_ids(std::uint64_t parent, std::uint64_t child)
{
    // splitmix64 finalizer over the combined key
    std::uint64_t z = parent * 0x9E3779B97F4A7C15ULL + child + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id))
{
}

RngStream RngStream::split(std::uint64_t sub_id) const
{
    return RngStream(seed_, mix_ids(stream_id_, sub_id));
}

double RngStream::uniform()
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

bool RngStream::bernoulli(double p)
{
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
}

double RngStream::exponential(double mean)
{
    return std::exponential_distribution<double>(1.0 / mean)(engine_);
}

double RngStream::normal(double mean, double sigma)
{
    if (sigma <= 0.0) return mean;
    return std::normal_distribution<double>(mean, sigma)(engine_);
}

std::uint64_t RngStream::geometric(double p)
{
    if (p >= 1.0) return 0;
    return static_cast<std::uint64_t>(std::geometric_distribution<std::int64_t>(p)(engine_));
}

TimePs sample_exponential(RngStream& rng, TimePs mean)
{
    if (mean.ps() <= 0) {
        throw std::invalid_argument(fmt::format("exponential mean must be > 0, got {} ps", mean.ps()));
    }
    return round_ps(rng.exponential(static_cast<double>(mean.ps())));
}

TimePs sample_gaussian_fwhm(RngStream& rng, TimePs center, double fwhm_ps)
{
    if (fwhm_ps < 0.0) {
        throw std::invalid_argument(fmt::format("FWHM must be >= 0, got {} ps", fwhm_ps));
    }
    if (fwhm_ps == 0.0) return center;
    return center + round_ps(rng.normal(0.0, fwhm_ps / kFwhmPerSigma));
}

std::uint64_t sample_poisson(RngStream& rng, double mean)
{
    if (mean < 0.0) {
        throw std::invalid_argument(fmt::format("Poisson mean must be >= 0, got {}", mean));
    }
    if (mean == 0.0) return 0;
    return static_cast<std::uint64_t>(std::poisson_distribution<std::int64_t>(mean)(rng.engine()));
}

} // namespace spadsim
