#pragma once

#include "spadsim/rng.hpp"
#include "spadsim/time.hpp"

#include <cstdint>
#include <vector>

namespace spadsim {

/// Poissonian continuous-wave light (e.g. an attenuated LED).
struct CwSourceConfig {
    double rate = 0.0; ///< photons/s at the detector
    TimePs duration;
};

/// Periodic picosecond laser. Pulse k is centered at k * period.
struct PulsedSourceConfig {
    TimePs period;
    double pulse_fwhm_ps = 0.0;
    double mean_photons_per_pulse = 0.0;
    TimePs duration;
};

/// Pairs of weak pulses separated by delta_t, repeated every pair_period.
struct PairScanConfig {
    TimePs delta_t;
    TimePs pair_period;
    double occupancy = 0.0; ///< probability that a pulse carries a photon
    std::uint64_t pairs = 0;
    double pulse_fwhm_ps = 0.0;
};

/// Photon-pair source pumped by a pulsed laser. Pulse k is emitted at k * period.
struct EntangledPairConfig {
    TimePs period;                     ///< 1 / repetition rate
    double mean_pairs_per_pulse = 0.0;
    double eta_alice = 1.0;
    double eta_bob = 1.0;
    TimePs duration;
    double emission_fwhm_ps = 0.0;     ///< pump pulse length folded into one Gaussian

    double rep_rate() const { return 1e12 / static_cast<double>(period.ps()); }
};

/// Pump repetition period after rate multiplication of the 120 MHz base laser.
/// `factor` must be one of 1, 2, 4, 8, 16, 32.
TimePs multiplied_period(int factor);

void validate(const CwSourceConfig& cfg);
void validate(const PulsedSourceConfig& cfg);
void validate(const PairScanConfig& cfg);
void validate(const EntangledPairConfig& cfg);

std::vector<TimePs> cw_poisson_stream(const CwSourceConfig& cfg, RngStream& rng);

/// Per pulse k ~ Poisson(mean) photons, each offset by Gaussian(pulse_fwhm).
/// Arrivals falling outside [0, duration) are dropped.
std::vector<TimePs> pulsed_train(const PulsedSourceConfig& cfg, RngStream& rng);

enum class PairSlot : std::uint8_t { First = 0, Second = 1 };

struct PairArrivals {
    std::vector<TimePs> times;       ///< sorted
    std::vector<std::uint64_t> pair; ///< pair index of each arrival
    std::vector<PairSlot> slot;
};

PairArrivals pulse_pair_sequence(const PairScanConfig& cfg, RngStream& rng);

/// One detector arm of a pair source. Arrays are parallel and sorted by time.
struct ArmStream {
    std::vector<TimePs> times;
    std::vector<std::uint64_t> pair_id; ///< shared with the partner photon
    std::vector<std::uint64_t> pulse;   ///< pump pulse index (true time slot)
};

struct PairStreams {
    ArmStream alice;
    ArmStream bob;
    std::uint64_t pairs_created = 0;
    std::uint64_t pairs_both_arms = 0;
};

PairStreams correlated_pair_stream(const EntangledPairConfig& cfg, RngStream& rng);

} // namespace spadsim
