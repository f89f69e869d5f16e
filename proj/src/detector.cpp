#include "spadsim/detector.hpp"

#include "spadsim/event_queue.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spadsim {

QuenchTimeline circuit_timing(const CircuitTiming& t)
{
    if (t.t_dly1.ps() < 0 || t.t_comp.ps() < 0 || t.t_q.ps() < 0 || t.t_rise.ps() < 0 || t.t_dly2.ps() < 0) {
        throw std::invalid_argument("circuit timing: delays must be >= 0");
    }
    if (t.t_dly1 < t.t_q) {
        throw std::invalid_argument(fmt::format("circuit timing: t_dly1 ({} ps) < t_q ({} ps) gives a negative twilight zone",
                                                t.t_dly1.ps(), t.t_q.ps()));
    }
    QuenchTimeline out;
    out.tau_twilight = t.t_dly1 - t.t_q;
    out.tau_quench = t.t_dly1 + t.t_comp;
    out.tau_dead = (t.t_dly1 + t.t_comp) * 2 - t.t_q;
    return out;
}

void DetectorParams::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("detector params: " + what); };
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) fail("efficiency must be in [0, 1]");
    if (tau_quench.ps() < 0) fail("tau_quench must be >= 0");
    if (tau_dead0 < tau_quench) fail("tau_quench must not exceed tau_dead0");
    if (base_delay.ps() < 0) fail("base_delay must be >= 0");
    if (!dead_elongation.empty() && dead_elongation.min_y() < 0.0) fail("dead_elongation values must be >= 0");
    if (!twilight_profile.empty()) {
        if (twilight_profile.min_y() < 0.0 || twilight_profile.max_y() > 1.0) fail("twilight_profile values must be in [0, 1]");
        if (!twilight_profile.non_decreasing()) fail("twilight_profile must be non-decreasing");
        if (std::abs(twilight_profile(static_cast<double>(tau_quench.ps()))) > 1e-9) fail("twilight_profile(tau_quench) must be 0");
        if (std::abs(twilight_profile(static_cast<double>(tau_dead0.ps())) - 1.0) > 1e-9) fail("twilight_profile(tau_dead0) must be 1");
    }
    if (!jitter_curve.empty() && jitter_curve.min_y() < 0.0) fail("jitter_curve values must be >= 0");
    if (!rate_jitter.empty() && rate_jitter.min_y() < 0.0) fail("rate_jitter values must be >= 0");
    if (!shift_curve.empty() && std::abs(shift_curve.points().back().second) > 1e-9) {
        fail("shift_curve must decay to 0 at its last point");
    }
    if (rate_window.ps() <= 0) fail("rate_window must be > 0");
    if (!(afterpulse.mu >= 0.0)) fail("afterpulse.mu must be >= 0");
    if (afterpulse.tau_trap.ps() <= 0) fail("afterpulse.tau_trap must be > 0");
    if (afterpulse.law == ReleaseLaw::PowerLaw && !(afterpulse.power_law_exponent > 1.0)) {
        fail("afterpulse.power_law_exponent must be > 1");
    }
    if (!(dark_rate >= 0.0)) fail("dark_rate must be >= 0");
    if (blanking) {
        if (blanking->t_b.ps() <= 0) fail("blanking.t_b must be > 0");
        if (blanking->out_width.ps() < 0) fail("blanking.out_width must be >= 0");
    }
}

TimePs effective_dead_time(double recent_rate, const DetectorParams& p)
{
    if (recent_rate < 0.0) throw std::invalid_argument("effective_dead_time: rate must be >= 0");
    if (p.dead_elongation.empty()) return p.tau_dead0;
    return p.tau_dead0 + round_ps(p.dead_elongation(recent_rate));
}

double twilight_sensitivity(TimePs dt, const DetectorParams& p, TimePs tau_dead)
{
    if (dt < p.tau_quench) return 0.0;
    if (dt >= tau_dead) return 1.0;
    if (p.twilight_profile.empty()) {
        const double span = static_cast<double>((tau_dead - p.tau_quench).ps());
        return span > 0.0 ? static_cast<double>((dt - p.tau_quench).ps()) / span : 1.0;
    }
    return std::clamp(p.twilight_profile(static_cast<double>(dt.ps())), 0.0, 1.0);
}

double twilight_sensitivity(TimePs dt, const DetectorParams& p)
{
    return twilight_sensitivity(dt, p, p.tau_dead0);
}

double calibrate_afterpulse_mu(double p_target, TimePs tau_trap, TimePs tau_dead)
{
    if (!(p_target >= 0.0) || p_target >= 1.0) {
        throw std::invalid_argument(fmt::format("afterpulse target must be in [0, 1), got {}", p_target));
    }
    if (tau_trap.ps() <= 0) throw std::invalid_argument("tau_trap must be > 0");
    return p_target * std::exp(static_cast<double>(tau_dead.ps()) / static_cast<double>(tau_trap.ps()));
}

double afterpulse_prob_vs_rs(double r_s_ohm)
{
    if (!(r_s_ohm >= 0.0)) throw std::invalid_argument("series resistance must be >= 0");
    constexpr double p_low = 0.055;
    constexpr double p_floor = 0.027;
    constexpr double r_knee = 800.0;
    // Decay constant that puts 3.3 kohm exactly at 3.2%.
    static const double r_scale = (3300.0 - r_knee) / std::log((p_low - p_floor) / (0.032 - p_floor));
    if (r_s_ohm <= r_knee) return p_low;
    return p_floor + (p_low - p_floor) * std::exp(-(r_s_ohm - r_knee) / r_scale);
}

std::string_view to_string(PulseCause c)
{
    switch (c) {
    case PulseCause::Photon: return "photon";
    case PulseCause::Dark: return "dark";
    case PulseCause::Afterpulse: return "afterpulse";
    case PulseCause::Twilight: return "twilight";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------

namespace {

/// Mutable per-run state of the quenching loop.
class QuenchLoop {
public:
    QuenchLoop(const DetectorParams& p, std::span<const TimePs> arrivals, TimePs duration, RngStream& decide,
               RngStream& timing, RngStream& traps, RngStream& dark, DetectorStats& stats)
        : p_(p), arrivals_(arrivals), duration_(duration), decide_(decide), timing_(timing), traps_(traps), dark_(dark),
          stats_(stats), rate_tau_s_(p.rate_window.seconds())
    {
    }

    void prime(EventQueue& q)
    {
        if (!arrivals_.empty()) q.push({arrivals_[0], EventKind::PhotonArrival, 0});
        schedule_dark(q, TimePs::zero());
    }

    void operator()(const SimEvent& ev, EventQueue& q)
    {
        switch (ev.kind) {
        case EventKind::PhotonArrival: {
            const auto i = ev.payload;
            if (i + 1 < arrivals_.size()) q.push({arrivals_[i + 1], EventKind::PhotonArrival, i + 1});
            ++stats_.arrivals;
            stimulus(ev.time, p_.efficiency, PulseCause::Photon, i, q);
            break;
        }
        case EventKind::DarkCount:
            ++stats_.dark_events;
            schedule_dark(q, ev.time);
            stimulus(ev.time, 1.0, PulseCause::Dark, kNoSource, q);
            break;
        case EventKind::TrapRelease:
            if (armed(ev.time)) {
                avalanche(ev.time, PulseCause::Afterpulse, kNoSource, q);
            } else {
                ++stats_.releases_discarded;
            }
            break;
        case EventKind::TimerExpiry:
            if (held_ && ev.payload == timer_token_) release_held(ev.time);
            break;
        }
    }

    std::vector<PulseRecord>& output() { return out_; }

private:
    bool armed(TimePs t) const { return !active_ || (!held_ && t >= ref_ + dead_len_); }

    void stimulus(TimePs t, double efficiency, PulseCause cause, std::uint64_t src, EventQueue& q)
    {
        if (armed(t)) {
            if (decide_.bernoulli(efficiency)) avalanche(t, cause, src, q);
            return;
        }
        if (held_) {
            ++stats_.lost_twilight;
            return;
        }
        const TimePs dt = t - ref_;
        if (dt < p_.tau_quench || !p_.twilight_enabled) {
            ++stats_.lost_quench;
            return;
        }
        const double sens = twilight_sensitivity(dt, p_, dead_len_);
        if (decide_.bernoulli(efficiency * sens)) {
            hold(t, src, q);
        } else {
            ++stats_.lost_twilight;
        }
    }

    double rate_at(TimePs t) const
    {
        if (!rate_seen_) return 0.0;
        return ema_ * std::exp(-(t - ema_time_).seconds() / rate_tau_s_);
    }

    void bump_rate(TimePs t)
    {
        ema_ = rate_at(t) + 1.0 / rate_tau_s_;
        ema_time_ = t;
        rate_seen_ = true;
    }

    void avalanche(TimePs t, PulseCause cause, std::uint64_t src, EventQueue& q)
    {
        ++stats_.avalanches;
        const double rate = rate_at(t);
        const double dt_prev = have_prev_ ? static_cast<double>((t - last_ref_).ps()) : 1e18;
        double shift = p_.shift_curve.empty() ? 0.0 : p_.shift_curve(dt_prev);
        if (!p_.rate_shift.empty()) shift += p_.rate_shift(rate);
        const double j_dt = p_.jitter_curve.empty() ? 0.0 : p_.jitter_curve(dt_prev);
        const double j_rate = p_.rate_jitter.empty() ? 0.0 : p_.rate_jitter(rate);
        const double fwhm = std::hypot(j_dt, j_rate);
        const TimePs ref = sample_gaussian_fwhm(timing_, t + round_ps(shift), fwhm);

        out_.push_back({ref + p_.base_delay, t, cause, src});
        start_dead_period(ref, rate);
        bump_rate(t);
        fill_traps(t, q);
    }

    void hold(TimePs t, std::uint64_t src, EventQueue& q)
    {
        ++stats_.avalanches;
        ++stats_.twilight_avalanches;
        held_ = true;
        held_origin_ = t;
        held_source_ = src;
        fill_traps(t, q);
        q.push({ref_ + dead_len_, EventKind::TimerExpiry, ++timer_token_});
    }

    // The latched loop senses the ongoing avalanche when the comparator re-arms
    // at the end of the dead period; the new quench cycle starts there.
    void release_held(TimePs t)
    {
        held_ = false;
        out_.push_back({t + p_.base_delay, held_origin_, PulseCause::Twilight, held_source_});
        const double rate = rate_at(t);
        start_dead_period(t, rate);
        bump_rate(t);
    }

    void start_dead_period(TimePs ref, double rate)
    {
        active_ = true;
        ref_ = ref;
        dead_len_ = effective_dead_time(rate, p_);
        last_ref_ = ref;
        have_prev_ = true;
    }

    void fill_traps(TimePs t, EventQueue& q)
    {
        if (p_.afterpulse.mu <= 0.0) return;
        const auto k = sample_poisson(traps_, p_.afterpulse.mu);
        stats_.traps_filled += k;
        for (std::uint64_t i = 0; i < k; ++i) {
            double delay_ps = 0.0;
            const double tau = static_cast<double>(p_.afterpulse.tau_trap.ps());
            if (p_.afterpulse.law == ReleaseLaw::Exponential) {
                delay_ps = traps_.exponential(tau);
            } else {
                const double u = 1.0 - traps_.uniform();
                delay_ps = tau * (std::pow(u, -1.0 / (p_.afterpulse.power_law_exponent - 1.0)) - 1.0);
            }
            const TimePs release = t + round_ps(std::min(delay_ps, 1e15));
            if (release <= duration_) q.push({release, EventKind::TrapRelease, 0});
        }
    }

    void schedule_dark(EventQueue& q, TimePs from)
    {
        if (p_.dark_rate <= 0.0) return;
        const TimePs t = from + round_ps(dark_.exponential(1e12 / p_.dark_rate));
        if (t <= duration_) q.push({t, EventKind::DarkCount, 0});
    }

    const DetectorParams& p_;
    std::span<const TimePs> arrivals_;
    TimePs duration_;
    RngStream& decide_;
    RngStream& timing_;
    RngStream& traps_;
    RngStream& dark_;
    DetectorStats& stats_;
    double rate_tau_s_;

    bool active_ = false;
    TimePs ref_;
    TimePs dead_len_;
    bool held_ = false;
    TimePs held_origin_;
    std::uint64_t held_source_ = kNoSource;
    std::uint64_t timer_token_ = 0;

    bool have_prev_ = false;
    TimePs last_ref_;

    bool rate_seen_ = false;
    double ema_ = 0.0;
    TimePs ema_time_;

    std::vector<PulseRecord> out_;
};

} // namespace

Detector::Detector(DetectorParams params, RngStream rng)
    : params_(std::move(params)), decide_rng_(rng.split(1)), timing_rng_(rng.split(2)), trap_rng_(rng.split(3)),
      dark_rng_(rng.split(4))
{
    params_.validate();
}

std::vector<PulseRecord> Detector::run(std::span<const TimePs> arrivals, TimePs duration)
{
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        if (arrivals[i] < arrivals[i - 1]) {
            throw std::invalid_argument(fmt::format("detect: arrivals must be sorted (index {} at {} ps precedes {} ps)", i,
                                                    arrivals[i].ps(), arrivals[i - 1].ps()));
        }
    }
    if (!arrivals.empty() && arrivals.front().ps() < 0) throw std::invalid_argument("detect: arrival times must be >= 0");

    QuenchLoop loop(params_, arrivals, duration, decide_rng_, timing_rng_, trap_rng_, dark_rng_, stats_);
    EventQueue queue;
    loop.prime(queue);
    spadsim::run(queue, loop, duration);

    auto& out = loop.output();
    std::stable_sort(out.begin(), out.end(), [](const PulseRecord& a, const PulseRecord& b) { return a.out_time < b.out_time; });
    if (params_.blanking) {
        auto kept = blanking_filter(out, params_.blanking->t_b);
        stats_.withheld += out.size() - kept.size();
        return kept;
    }
    return std::move(out);
}

std::vector<PulseRecord> detect(std::span<const TimePs> arrivals, const DetectorParams& params, RngStream& rng,
                                TimePs duration)
{
    Detector det(params, rng.split(rng.engine()()));
    return det.run(arrivals, duration);
}

std::vector<TimePs> blanking_filter(std::span<const TimePs> pulses, TimePs t_b)
{
    std::vector<TimePs> out;
    out.reserve(pulses.size());
    for (const TimePs t : pulses) {
        if (out.empty() || t - out.back() >= t_b) out.push_back(t);
    }
    return out;
}

std::vector<PulseRecord> blanking_filter(std::span<const PulseRecord> pulses, TimePs t_b)
{
    std::vector<PulseRecord> out;
    out.reserve(pulses.size());
    for (const auto& p : pulses) {
        if (out.empty() || p.out_time - out.back().out_time >= t_b) out.push_back(p);
    }
    return out;
}

std::vector<TimePs> out_times(std::span<const PulseRecord> pulses)
{
    std::vector<TimePs> out;
    out.reserve(pulses.size());
    for (const auto& p : pulses) out.push_back(p.out_time);
    return out;
}

} // namespace spadsim
