#include "spadsim/presets.hpp"

#include <fmt/core.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spadsim {

using namespace spadsim::literals;

namespace {

// Rate-table endpoints for the spcm-aqrh preset. The 4 Mcps entries are tuned
// so that a simulated jitter scan at 4 Mcps reproduces the measured peak shift
// and FWHM once the separation-keyed curves are folded in.
constexpr double kSpcmLowRate = 50e3;
constexpr double kSpcmHighRate = 4e6;
constexpr double kSpcmRateShiftPs = 844.0;
constexpr double kSpcmRateJitterPs = 473.0;

// exp recovery from `peak` at t0 down to `floor`, sampled finely enough that
// linear interpolation stays within 0.3% of the exponential.
PiecewiseLinear recovery_table(TimePs t0, TimePs tau, double peak, double floor)
{
    std::vector<PiecewiseLinear::Point> pts;
    const double t0_ps = static_cast<double>(t0.ps());
    const double tau_ps = static_cast<double>(tau.ps());
    for (int k = 0; k <= 64; ++k) {
        const double dt = tau_ps * k / 8.0;
        pts.emplace_back(t0_ps + dt, floor + (peak - floor) * std::exp(-dt / tau_ps));
    }
    pts.emplace_back(t0_ps + 10.0 * tau_ps, floor);
    return PiecewiseLinear(std::move(pts));
}

DetectorPreset spcm_aqrh()
{
    DetectorPreset d;
    d.name = "spcm-aqrh";
    d.description = "Excelitas SPCM-AQRH-like thick-junction module";
    auto& p = d.params;
    p.efficiency = 0.65;
    p.tau_dead0 = 29.1_ns;
    p.tau_quench = 10_ns;
    p.twilight_profile = {};
    p.base_delay = 10_ns;
    p.jitter_curve = recovery_table(p.tau_dead0, spcm_shift_recovery(), 608.0, 335.0);
    p.shift_curve = recovery_table(p.tau_dead0, spcm_shift_recovery(), 855.0, 0.0);
    p.rate_jitter = PiecewiseLinear({{kSpcmLowRate, 0.0}, {kSpcmHighRate, kSpcmRateJitterPs}});
    p.rate_shift = PiecewiseLinear({{kSpcmLowRate, 0.0}, {kSpcmHighRate, kSpcmRateShiftPs}});
    p.rate_window = 100_us;
    p.afterpulse.tau_trap = 32_ns;
    p.afterpulse.mu = calibrate_afterpulse_mu(0.0068, p.afterpulse.tau_trap, p.tau_dead0);
    p.dark_rate = 726.0;
    d.provenance = {
        {"efficiency", "detection efficiency at the laser wavelength: 65%", true},
        {"tau_dead0", "gap of the interarrival histogram under 50 kcps CW light: 29.1 +- 0.1 ns", true},
        {"dark_rate", "dark count rate: 726 +- 10 cps", true},
        {"afterpulse", "deep-level spectroscopy of the interarrival histogram: 0.68 +- 0.04 % with trap lifetime 32 +- 2 ns; "
                       "mu chosen so releases surviving the dead time give 0.68%",
         true},
        {"jitter_curve", "335 ps FWHM at low rate; the rise toward 608 ps for separations near the dead time is a "
                         "modelling choice",
         false},
        {"rate_jitter", "total FWHM 335 ps at 50 kcps growing to 608 ps at 4 Mcps (quadrature term)", true},
        {"shift_curve", "delay shift decays below the ~100 ps systematic error for separations above 50 ns; the 855 ps "
                        "peak at the dead time is borrowed from the 4 Mcps shift",
         false},
        {"rate_shift", "peak detection time moves by 855 ps between low rate and 4 Mcps", true},
        {"tau_quench", "not measured; 10 ns default", false},
        {"twilight_profile", "linear ramp from tau_quench to tau_dead; only seen graphically", false},
        {"base_delay", "not measured; nominal 10 ns", false},
        {"rate_window", "100 us averaging so single events barely move the rate estimate at low rate", false},
    };
    return d;
}

DetectorPreset spd_050(bool ttl)
{
    DetectorPreset d;
    d.name = ttl ? "spd-050-ttl" : "spd-050";
    d.description = ttl ? "MPD SPD-050-like thin-junction module, TTL output"
                        : "MPD SPD-050-like thin-junction module, Timing output";
    auto& p = d.params;
    p.efficiency = 0.33;
    p.tau_dead0 = ttl ? 78_ns : 74.5_ns;
    p.tau_quench = ttl ? 50_ns : 60_ns;
    p.base_delay = 10_ns;
    p.jitter_curve = PiecewiseLinear::constant(35.0);
    p.rate_jitter = PiecewiseLinear({{50e3, 0.0}, {4e6, std::sqrt(50.0 * 50.0 - 35.0 * 35.0)}});
    p.afterpulse.tau_trap = 50_ns;
    p.afterpulse.mu = calibrate_afterpulse_mu(0.004, p.afterpulse.tau_trap, p.tau_dead0);
    p.dark_rate = 100.0;
    d.provenance = {
        {"efficiency", "detection efficiency at the laser wavelength: 33%", true},
        {"tau_dead0", ttl ? "dead time of the TTL output: 78.0 ns" : "dead time of the Timing output: 74.5 ns", true},
        {"jitter", "35 ps at low rate to 50 ps at 4 Mcps; the rate mapping is a modelling choice", false},
        {"afterpulse", "0.4% (below the 0.5% bound) with an assumed 50 ns trap lifetime", false},
        {"tau_quench", ttl ? "TTL output twilight zone taken as the last 28 ns of the dead time; only seen graphically"
                           : "Timing output twilight zone taken as the last 14.5 ns of the dead time; only seen graphically",
         false},
        {"dark_rate", "placeholder 100 cps", false},
        {"base_delay", "not measured; nominal 10 ns", false},
    };
    return d;
}

DetectorPreset custom_aq()
{
    DetectorPreset d;
    d.name = "custom-aq";
    d.description = "custom active-quenching module with blanking circuit";
    auto& p = d.params;
    const QuenchTimeline tl = circuit_timing({6_ns, 4.5_ns, 0.5_ns, 0.5_ns, 12_ns});
    p.efficiency = 0.65;
    // The delay algebra gives 20.5 ns; the low-rate dead time measured on the module is 21.5 ns.
    p.tau_dead0 = 21.5_ns;
    p.dead_elongation = PiecewiseLinear({{0.0, 0.0}, {30e6, 2000.0}});
    p.tau_quench = tl.tau_quench;
    const double twilight_start = static_cast<double>((p.tau_dead0 - tl.tau_twilight).ps());
    p.twilight_profile = PiecewiseLinear({{static_cast<double>(tl.tau_quench.ps()), 0.0},
                                          {twilight_start, 0.0},
                                          {static_cast<double>(p.tau_dead0.ps()), 1.0}});
    p.base_delay = 9_ns;
    p.jitter_curve = PiecewiseLinear::constant(164.0);
    p.rate_jitter = PiecewiseLinear({{300e3, 0.0}, {4e6, std::sqrt(233.0 * 233.0 - 164.0 * 164.0)}});
    p.rate_shift = PiecewiseLinear({{300e3, 0.0}, {4e6, 26.0}});
    p.afterpulse.tau_trap = 32_ns;
    p.blanking = Blanking{blanking_period({6_ns, 4.5_ns, 0.5_ns, 0.5_ns, 12_ns}), 12_ns};
    p.afterpulse.mu = calibrate_afterpulse_mu(afterpulse_prob_vs_rs(3300.0), p.afterpulse.tau_trap, p.blanking->t_b);
    p.dark_rate = 300.0;
    d.provenance = {
        {"tau_dead0", "measured low-rate dead time 21.5 ns; the delay algebra with T_DLY1 = 6 ns, T_COMP = 4.5 ns, "
                      "T_Q = 0.5 ns evaluates to 20.5 ns",
         true},
        {"tau_quench", "circuit timing: T_DLY1 + T_COMP = 10.5 ns", true},
        {"twilight_profile", "5.5 ns twilight zone (T_DLY1 - T_Q) ending at the dead time; ramp shape is a modelling choice",
         true},
        {"dead_elongation", "21.5 ns at low rate elongating to 23.5 ns at 30 Mcps", true},
        {"blanking", "T_B = 24 ns with a 12 ns output pulse", true},
        {"base_delay", "output delayed about 9 ns after the quenching pulse", true},
        {"jitter_curve", "164 ps FWHM below 300 kcps", true},
        {"rate_jitter", "233 ps FWHM at 4 Mcps (quadrature term)", true},
        {"rate_shift", "26 ps delay shift at 4 Mcps", true},
        {"afterpulse", "3.2% at R_S = 3.3 kohm; trap lifetime 32 ns borrowed from the commercial module", false},
        {"efficiency", "not reported separately; set equal to the commercial thick-junction module", false},
        {"dark_rate", "placeholder 300 cps", false},
    };
    return d;
}

} // namespace

TimePs spcm_shift_recovery()
{
    // 855 ps * exp(-(50 - 29.1) ns / tau) = 100 ps, rounded down to 9.7 ns so the
    // curve is strictly below 100 ps beyond 50 ns.
    return 9.7_ns;
}

std::vector<std::string> preset_names() { return {"spcm-aqrh", "spd-050", "spd-050-ttl", "custom-aq"}; }

DetectorPreset preset(std::string_view name)
{
    DetectorPreset d;
    if (name == "spcm-aqrh") {
        d = spcm_aqrh();
    } else if (name == "spd-050") {
        d = spd_050(false);
    } else if (name == "spd-050-ttl") {
        d = spd_050(true);
    } else if (name == "custom-aq") {
        d = custom_aq();
    } else {
        throw std::invalid_argument(fmt::format("unknown preset '{}'; available: {}", name, fmt::join(preset_names(), ", ")));
    }
    d.params.validate();
    return d;
}

// ---------------------------------------------------------------------------

std::vector<double> isotonic_regression(std::span<const double> y, std::span<const double> w)
{
    if (!w.empty() && w.size() != y.size()) throw std::invalid_argument("isotonic_regression: weight count mismatch");
    struct Block {
        double mean;
        double weight;
        std::size_t len;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        if (!(wi > 0.0)) throw std::invalid_argument("isotonic_regression: weights must be > 0");
        blocks.push_back({y[i], wi, 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            a.mean = (a.mean * a.weight + b.mean * b.weight) / (a.weight + b.weight);
            a.weight += b.weight;
            a.len += b.len;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks) out.insert(out.end(), b.len, b.mean);
    return out;
}

CurveFit fit_preset_from_curves(const CurveInputs& in, const DetectorParams& base)
{
    CurveFit fit;
    fit.params = base;
    auto table = [](const std::vector<PiecewiseLinear::Point>& pts, std::string_view what) {
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (!(pts[i].first > pts[i - 1].first)) {
                throw std::invalid_argument(fmt::format("{} curve: x must be strictly increasing (point {} at {} after {})", what,
                                                        i, pts[i].first, pts[i - 1].first));
            }
        }
        return PiecewiseLinear(pts);
    };
    if (!in.jitter.empty()) fit.params.jitter_curve = table(in.jitter, "jitter");
    if (!in.shift.empty()) fit.params.shift_curve = table(in.shift, "shift");
    if (!in.twilight.empty()) {
        table(in.twilight, "twilight");
        std::vector<double> y;
        for (const auto& [x, v] : in.twilight) {
            const double c = std::clamp(v, 0.0, 1.0);
            if (c != v) {
                fit.twilight_adjusted = true;
                fit.warnings.push_back(fmt::format("twilight value {} at {} ps clipped to [0, 1]", v, x));
            }
            y.push_back(c);
        }
        const auto iso = isotonic_regression(y);
        if (!std::equal(iso.begin(), iso.end(), y.begin())) {
            fit.twilight_adjusted = true;
            fit.warnings.push_back("twilight curve was not monotone; replaced by its isotonic regression");
        }
        std::vector<PiecewiseLinear::Point> pts;
        for (std::size_t i = 0; i < iso.size(); ++i) pts.emplace_back(in.twilight[i].first, iso[i]);
        fit.params.twilight_profile = PiecewiseLinear(std::move(pts));
    }
    fit.params.validate();
    return fit;
}

} // namespace spadsim
