#pragma once

#include "spadsim/rng.hpp"
#include "spadsim/table.hpp"
#include "spadsim/time.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spadsim {

// ---------------------------------------------------------------------------
// Quenching-circuit timing

/// Propagation delays of the active-quenching loop.
struct CircuitTiming {
    TimePs t_dly1; ///< buffer delay
    TimePs t_comp; ///< comparator propagation delay
    TimePs t_q;    ///< quench stage propagation delay
    TimePs t_rise; ///< avalanche to comparator trigger
    TimePs t_dly2; ///< blanking half-period, T_B = 2 * t_dly2
};

struct QuenchTimeline {
    TimePs tau_twilight;
    TimePs tau_quench;
    TimePs tau_dead;
};

/// twilight = dly1 - q, quench = dly1 + comp, dead = 2 (dly1 + comp) - q.
/// Throws std::invalid_argument when t_dly1 < t_q (negative twilight) or any delay is negative.
QuenchTimeline circuit_timing(const CircuitTiming& t);

inline TimePs blanking_period(const CircuitTiming& t) { return t.t_dly2 * 2; }

// ---------------------------------------------------------------------------
// Behavioral parameters

enum class ReleaseLaw : std::uint8_t {
    Exponential, ///< single trap lifetime
    PowerLaw,    ///< Lomax tail (1 + t/tau_trap)^-exponent, for continuum-of-lifetimes devices
};

struct AfterpulseModel {
    double mu = 0.0; ///< mean traps filled per avalanche
    TimePs tau_trap{32'000};
    ReleaseLaw law = ReleaseLaw::Exponential;
    double power_law_exponent = 2.5;
};

struct Blanking {
    TimePs t_b;
    TimePs out_width;
};

/// Full behavioral description of one actively quenched detector.
///
/// Table keys: jitter/shift curves use the time since the previous avalanche
/// (ps); rate tables use the recent avalanche rate (1/s) from an exponential
/// moving average with time constant `rate_window`.
struct DetectorParams {
    double efficiency = 1.0;

    TimePs tau_dead0;                 ///< dead time at low rate
    PiecewiseLinear dead_elongation;  ///< rate -> added dead time (ps)
    TimePs tau_quench;
    PiecewiseLinear twilight_profile; ///< time since avalanche (ps) -> relative sensitivity; empty = linear ramp
    bool twilight_enabled = true;

    TimePs base_delay;                ///< photon to output-pulse latency
    PiecewiseLinear jitter_curve;     ///< dt since previous avalanche -> FWHM (ps)
    PiecewiseLinear shift_curve;      ///< dt since previous avalanche -> added delay (ps)
    PiecewiseLinear rate_jitter;      ///< rate -> extra FWHM (ps), added in quadrature
    PiecewiseLinear rate_shift;       ///< rate -> added delay (ps)
    TimePs rate_window{1'000'000};    ///< EMA time constant of the rate estimator

    AfterpulseModel afterpulse;
    double dark_rate = 0.0;           ///< output-referred dark counts per second
    std::optional<Blanking> blanking;

    /// Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
};

/// Dead time for a given recent avalanche rate: tau_dead0 plus the clamped
/// piecewise-linear elongation.
TimePs effective_dead_time(double recent_rate, const DetectorParams& p);

/// Relative sensitivity `dt` after an avalanche: 0 below tau_quench, 1 at or
/// beyond tau_dead, the configured profile in between.
double twilight_sensitivity(TimePs dt, const DetectorParams& p);
double twilight_sensitivity(TimePs dt, const DetectorParams& p, TimePs tau_dead);

/// Mean traps per avalanche such that the fraction of releases surviving the
/// dead period equals p_target: mu = p_target * exp(tau_dead / tau_trap).
double calibrate_afterpulse_mu(double p_target, TimePs tau_trap, TimePs tau_dead);

/// Afterpulse probability of the custom module versus its series resistor.
/// Flat 5.5% up to 800 ohm, 3.2% at 3.3 kohm, approaching 2.7% for large values.
double afterpulse_prob_vs_rs(double r_s_ohm);

// ---------------------------------------------------------------------------
// Simulation

enum class PulseCause : std::uint8_t { Photon, Dark, Afterpulse, Twilight };

std::string_view to_string(PulseCause c);

inline constexpr std::uint64_t kNoSource = std::numeric_limits<std::uint64_t>::max();

struct PulseRecord {
    TimePs out_time;
    TimePs origin_time; ///< true avalanche-triggering instant
    PulseCause cause = PulseCause::Photon;
    std::uint64_t source = kNoSource; ///< index of the triggering arrival, if any

    bool operator==(const PulseRecord&) const = default;
};

struct DetectorStats {
    std::uint64_t arrivals = 0;
    std::uint64_t dark_events = 0;
    std::uint64_t avalanches = 0;
    std::uint64_t lost_quench = 0;
    std::uint64_t lost_twilight = 0;   ///< twilight-zone photons that did not avalanche
    std::uint64_t twilight_avalanches = 0;
    std::uint64_t traps_filled = 0;
    std::uint64_t releases_discarded = 0;
    std::uint64_t withheld = 0;        ///< removed by the blanking circuit
};

/// Runs the quenching state machine over one arrival stream.
class Detector {
public:
    Detector(DetectorParams params, RngStream rng);

    /// `arrivals` must be sorted. Events up to and including `duration` are
    /// processed. Output is sorted by out_time and already blanked.
    std::vector<PulseRecord> run(std::span<const TimePs> arrivals, TimePs duration);

    const DetectorStats& stats() const { return stats_; }
    const DetectorParams& params() const { return params_; }

private:
    DetectorParams params_;
    RngStream decide_rng_;
    RngStream timing_rng_;
    RngStream trap_rng_;
    RngStream dark_rng_;
    DetectorStats stats_;
};

/// Convenience wrapper: one Detector over `arrivals`, seeded from `rng`.
std::vector<PulseRecord> detect(std::span<const TimePs> arrivals, const DetectorParams& params, RngStream& rng,
                                TimePs duration);

/// Non-retriggerable blanking: a pulse closer than t_b to the previous
/// transmitted pulse is withheld and does not restart the window.
std::vector<TimePs> blanking_filter(std::span<const TimePs> pulses, TimePs t_b);
std::vector<PulseRecord> blanking_filter(std::span<const PulseRecord> pulses, TimePs t_b);

std::vector<TimePs> out_times(std::span<const PulseRecord> pulses);

} // namespace spadsim
