#include "spadsim/sources.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spadsim {

namespace {

// Poisson(mean) conditioned on k >= 1.
std::uint64_t zero_truncated_poisson(RngStream& rng, double mean)
{
    if (mean > 1.0) {
        for (;;) {
            const auto k = sample_poisson(rng, mean);
            if (k > 0) return k;
        }
    }
    // Inverse CDF on (P(0), 1).
    const double p0 = std::exp(-mean);
    const double u = p0 + (1.0 - p0) * rng.uniform();
    double pmf = p0;
    double cdf = p0;
    std::uint64_t k = 0;
    while (cdf < u && k < 1000) {
        ++k;
        pmf *= mean / static_cast<double>(k);
        cdf += pmf;
    }
    return std::max<std::uint64_t>(k, 1);
}

// Calls visit(pulse_index, count) for every pulse with count ~ Poisson(mean) > 0,
// skipping empty pulses geometrically.
template <typename Visit>
void for_each_occupied_pulse(RngStream& rng, double mean, std::uint64_t n_pulses, Visit&& visit)
{
    if (mean <= 0.0 || n_pulses == 0) return;
    const double p_occupied = -std::expm1(-mean);
    std::uint64_t k = rng.geometric(p_occupied);
    while (k < n_pulses) {
        visit(k, zero_truncated_poisson(rng, mean));
        k += 1 + rng.geometric(p_occupied);
    }
}

std::uint64_t pulses_in(TimePs duration, TimePs period)
{
    if (duration.ps() <= 0) return 0;
    return static_cast<std::uint64_t>((duration.ps() + period.ps() - 1) / period.ps());
}

void sort_arm(ArmStream& arm)
{
    std::vector<std::size_t> idx(arm.times.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return arm.times[a] < arm.times[b]; });
    ArmStream out;
    out.times.reserve(idx.size());
    out.pair_id.reserve(idx.size());
    out.pulse.reserve(idx.size());
    for (auto i : idx) {
        out.times.push_back(arm.times[i]);
        out.pair_id.push_back(arm.pair_id[i]);
        out.pulse.push_back(arm.pulse[i]);
    }
    arm = std::move(out);
}

} // namespace

TimePs multiplied_period(int factor)
{
    switch (factor) {
    case 1: case 2: case 4: case 8: case 16: case 32:
        // 120 MHz base: 8333.33 ps / factor, rounded to the picosecond grid.
        return round_ps(1e12 / (120e6 * factor));
    default:
        throw std::invalid_argument(fmt::format("rate multiplication factor must be a power of two in [1, 32], got {}", factor));
    }
}

void validate(const CwSourceConfig& cfg)
{
    if (!(cfg.rate >= 0.0) || !std::isfinite(cfg.rate)) throw std::invalid_argument("cw source: rate must be >= 0");
    if (cfg.duration.ps() < 0) throw std::invalid_argument("cw source: duration must be >= 0");
}

void validate(const PulsedSourceConfig& cfg)
{
    if (cfg.period.ps() <= 0) throw std::invalid_argument("pulsed source: period must be > 0");
    if (!(cfg.pulse_fwhm_ps >= 0.0)) throw std::invalid_argument("pulsed source: pulse_fwhm must be >= 0");
    if (!(cfg.mean_photons_per_pulse >= 0.0)) throw std::invalid_argument("pulsed source: mean_photons_per_pulse must be >= 0");
    if (cfg.duration.ps() < 0) throw std::invalid_argument("pulsed source: duration must be >= 0");
}

void validate(const PairScanConfig& cfg)
{
    if (cfg.delta_t.ps() <= 0) throw std::invalid_argument("pair scan: delta_t must be > 0");
    if (!(cfg.pair_period > cfg.delta_t)) throw std::invalid_argument("pair scan: pair_period must exceed delta_t");
    if (!(cfg.occupancy >= 0.0 && cfg.occupancy <= 1.0)) throw std::invalid_argument("pair scan: occupancy must be in [0, 1]");
    if (!(cfg.pulse_fwhm_ps >= 0.0)) throw std::invalid_argument("pair scan: pulse_fwhm must be >= 0");
}

void validate(const EntangledPairConfig& cfg)
{
    if (cfg.period.ps() <= 0) throw std::invalid_argument("pair source: period must be > 0");
    if (!(cfg.mean_pairs_per_pulse >= 0.0)) throw std::invalid_argument("pair source: mean_pairs_per_pulse must be >= 0");
    if (!(cfg.eta_alice >= 0.0 && cfg.eta_alice <= 1.0)) throw std::invalid_argument("pair source: eta_alice must be in [0, 1]");
    if (!(cfg.eta_bob >= 0.0 && cfg.eta_bob <= 1.0)) throw std::invalid_argument("pair source: eta_bob must be in [0, 1]");
    if (!(cfg.emission_fwhm_ps >= 0.0)) throw std::invalid_argument("pair source: emission_fwhm must be >= 0");
    if (cfg.duration.ps() < 0) throw std::invalid_argument("pair source: duration must be >= 0");
}

std::vector<TimePs> cw_poisson_stream(const CwSourceConfig& cfg, RngStream& rng)
{
    validate(cfg);
    std::vector<TimePs> out;
    if (cfg.rate == 0.0) return out;
    const double mean_gap_ps = 1e12 / cfg.rate;
    const double end = static_cast<double>(cfg.duration.ps());
    out.reserve(static_cast<std::size_t>(cfg.rate * cfg.duration.seconds() * 1.01) + 16);
    double t = rng.exponential(mean_gap_ps);
    while (t < end) {
        const TimePs tp = round_ps(t);
        if (tp < cfg.duration) out.push_back(tp);
        t += rng.exponential(mean_gap_ps);
    }
    return out;
}

std::vector<TimePs> pulsed_train(const PulsedSourceConfig& cfg, RngStream& rng)
{
    validate(cfg);
    std::vector<TimePs> out;
    for_each_occupied_pulse(rng, cfg.mean_photons_per_pulse, pulses_in(cfg.duration, cfg.period),
                            [&](std::uint64_t k, std::uint64_t n) {
                                const TimePs center = cfg.period * static_cast<std::int64_t>(k);
                                for (std::uint64_t i = 0; i < n; ++i) {
                                    const TimePs t = sample_gaussian_fwhm(rng, center, cfg.pulse_fwhm_ps);
                                    if (t >= TimePs::zero() && t < cfg.duration) out.push_back(t);
                                }
                            });
    std::sort(out.begin(), out.end());
    return out;
}

PairArrivals pulse_pair_sequence(const PairScanConfig& cfg, RngStream& rng)
{
    validate(cfg);
    struct Item {
        TimePs t;
        std::uint64_t pair;
        PairSlot slot;
    };
    std::vector<Item> items;
    for (std::uint64_t i = 0; i < cfg.pairs; ++i) {
        const TimePs base = cfg.pair_period * static_cast<std::int64_t>(i);
        for (PairSlot s : {PairSlot::First, PairSlot::Second}) {
            if (!rng.bernoulli(cfg.occupancy)) continue;
            const TimePs center = s == PairSlot::First ? base : base + cfg.delta_t;
            const TimePs t = sample_gaussian_fwhm(rng, center, cfg.pulse_fwhm_ps);
            if (t >= TimePs::zero()) items.push_back({t, i, s});
        }
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.t < b.t; });
    PairArrivals out;
    out.times.reserve(items.size());
    out.pair.reserve(items.size());
    out.slot.reserve(items.size());
    for (const auto& it : items) {
        out.times.push_back(it.t);
        out.pair.push_back(it.pair);
        out.slot.push_back(it.slot);
    }
    return out;
}

PairStreams correlated_pair_stream(const EntangledPairConfig& cfg, RngStream& rng)
{
    validate(cfg);
    PairStreams out;
    std::uint64_t next_id = 0;
    for_each_occupied_pulse(rng, cfg.mean_pairs_per_pulse, pulses_in(cfg.duration, cfg.period),
                            [&](std::uint64_t k, std::uint64_t n) {
                                const TimePs center = cfg.period * static_cast<std::int64_t>(k);
                                for (std::uint64_t i = 0; i < n; ++i) {
                                    const std::uint64_t id = next_id++;
                                    ++out.pairs_created;
                                    const TimePs t = sample_gaussian_fwhm(rng, center, cfg.emission_fwhm_ps);
                                    const bool in_range = t >= TimePs::zero() && t < cfg.duration;
                                    const bool a = rng.bernoulli(cfg.eta_alice);
                                    const bool b = rng.bernoulli(cfg.eta_bob);
                                    if (!in_range) continue;
                                    if (a) {
                                        out.alice.times.push_back(t);
                                        out.alice.pair_id.push_back(id);
                                        out.alice.pulse.push_back(k);
                                    }
                                    if (b) {
                                        out.bob.times.push_back(t);
                                        out.bob.pair_id.push_back(id);
                                        out.bob.pulse.push_back(k);
                                    }
                                    if (a && b) ++out.pairs_both_arms;
                                }
                            });
    sort_arm(out.alice);
    sort_arm(out.bob);
    return out;
}

} // namespace spadsim
