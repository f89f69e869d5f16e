#include "spadsim/qkd.hpp"

#include "spadsim/analysis.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace spadsim {

void FrameConfig::validate() const
{
    if (bin_width.ps() <= 0) throw std::invalid_argument("frame: bin_width must be > 0");
    if (bins_per_frame < 2 || !std::has_single_bit(bins_per_frame)) {
        throw std::invalid_argument(fmt::format("frame: bins_per_frame must be a power of two >= 2, got {}", bins_per_frame));
    }
}

BinIndex bin_assign(TimePs t, const FrameConfig& f)
{
    if (t.ps() < 0) throw std::invalid_argument(fmt::format("bin_assign: negative time {} ps", t.ps()));
    const std::int64_t frame_len = f.bin_width.ps() * static_cast<std::int64_t>(f.bins_per_frame);
    BinIndex b;
    b.frame = static_cast<std::uint64_t>(t.ps() / frame_len);
    b.bin = static_cast<std::uint32_t>((t.ps() % frame_len) / f.bin_width.ps());
    return b;
}

double raw_key_rate(double coincidence_rate, std::uint64_t n_bins)
{
    if (n_bins < 2) throw std::invalid_argument(fmt::format("raw_key_rate: need at least 2 bins, got {}", n_bins));
    return coincidence_rate * std::log2(static_cast<double>(n_bins));
}

namespace {

bool is_optical(PulseCause c) { return c == PulseCause::Photon || c == PulseCause::Twilight; }

// Median of (output time - true pulse time) over photon-triggered pulses.
TimePs calibrate_latency(std::span<const PulseRecord> pulses, const ArmStream& arm, TimePs period, TimePs fallback)
{
    std::vector<std::int64_t> d;
    for (const auto& p : pulses) {
        if (p.cause != PulseCause::Photon || p.source == kNoSource) continue;
        d.push_back((p.out_time - period * static_cast<std::int64_t>(arm.pulse[p.source])).ps());
    }
    if (d.empty()) return fallback;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return TimePs{*mid};
}

} // namespace

TimePs blind_period(const DetectorParams& p)
{
    TimePs t = p.tau_dead0;
    if (!p.dead_elongation.empty()) t += round_ps(p.dead_elongation.max_y());
    if (p.blanking) t = std::max(t, p.blanking->t_b);
    return t;
}

QkdReport run_qkd_scenario(const EntangledPairConfig& source, const DetectorParams& det_a, const DetectorParams& det_b,
                           const FrameConfig& f, TimePs duration, RngStream& rng, const QkdOptions& opt)
{
    f.validate();
    if (f.bin_width != source.period) {
        throw std::invalid_argument(fmt::format("qkd: bin width {} ps must equal the pump period {} ps", f.bin_width.ps(),
                                                source.period.ps()));
    }
    if (duration.ps() <= 0) throw std::invalid_argument("qkd: duration must be > 0");
    if (opt.ac_periods < 10) throw std::invalid_argument("qkd: ac_periods must be >= 10");
    if (opt.ac_bins_per_period < 2) throw std::invalid_argument("qkd: ac_bins_per_period must be >= 2");
    EntangledPairConfig src = source;
    src.duration = duration;

    RngStream src_rng = rng.split(0x50);
    const PairStreams streams = correlated_pair_stream(src, src_rng);
    Detector da(det_a, rng.split(0xa));
    Detector db(det_b, rng.split(0xb));
    const auto pa = da.run(streams.alice.times, duration);
    const auto pb = db.run(streams.bob.times, duration);

    const TimePs T = f.bin_width;
    QkdReport r;
    r.duration_s = duration.seconds();
    r.rep_rate = f.rep_rate();
    r.bins_per_frame = f.bins_per_frame;
    r.pairs_created = streams.pairs_created;
    r.singles_a = pa.size();
    r.singles_b = pb.size();
    r.singles_rate_a = static_cast<double>(r.singles_a) / r.duration_s;
    r.singles_rate_b = static_cast<double>(r.singles_b) / r.duration_s;
    r.latency_a = calibrate_latency(pa, streams.alice, T, det_a.base_delay);
    r.latency_b = calibrate_latency(pb, streams.bob, T, det_b.base_delay);

    // Latency-corrected times; pulse k then sits at k*T.
    std::vector<TimePs> ta;
    std::vector<TimePs> tb;
    ta.reserve(pa.size());
    tb.reserve(pb.size());
    for (const auto& p : pa) ta.push_back(p.out_time - r.latency_a);
    for (const auto& p : pb) tb.push_back(p.out_time - r.latency_b);

    // Bins are centered on the comb.
    const TimePs half{T.ps() / 2};
    auto assign = [&](TimePs t) { return bin_assign(std::max(t + half, TimePs::zero()), f); };
    auto truth = [&](std::uint64_t pulse) {
        return BinIndex{pulse / f.bins_per_frame, static_cast<std::uint32_t>(pulse % f.bins_per_frame)};
    };

    const CoincidenceResult co = coincidence(ta, tb, T, T);
    r.coincidences = co.pairs.size();
    std::uint64_t lab_errors = 0;
    std::uint64_t truth_errors = 0;
    for (const auto& c : co.pairs) {
        const BinIndex ba = assign(ta[c.a]);
        const BinIndex bb = assign(tb[c.b]);
        if (!(ba == bb)) ++lab_errors;
        const auto& ra = pa[c.a];
        const auto& rb = pb[c.b];
        const bool partners = is_optical(ra.cause) && is_optical(rb.cause) && ra.source != kNoSource &&
                              rb.source != kNoSource &&
                              streams.alice.pair_id[ra.source] == streams.bob.pair_id[rb.source];
        if (!partners) {
            ++truth_errors;
            continue;
        }
        ++r.true_coincidences;
        const BinIndex want = truth(streams.alice.pulse[ra.source]);
        if (!(ba == want) || !(bb == want)) ++truth_errors;
    }
    if (r.coincidences > 0) {
        r.timing_ber = static_cast<double>(truth_errors) / static_cast<double>(r.coincidences);
        r.lab_ber = static_cast<double>(lab_errors) / static_cast<double>(r.coincidences);
    }
    r.coincidence_rate = static_cast<double>(r.coincidences) / r.duration_s;
    r.raw_key_rate = raw_key_rate(r.coincidence_rate, f.bins_per_frame);
    if (r.singles_a + r.singles_b > 0) r.heralding = heralding_efficiency(r.coincidences, r.singles_a, r.singles_b);

    // Autocorrelation visibility per arm.
    const TimePs min_lag = opt.ac_min_lag.value_or(std::max(blind_period(det_a), blind_period(det_b)) + TimePs{2'000});
    const TimePs w{std::max<std::int64_t>(1, T.ps() / opt.ac_bins_per_period)};
    const TimePs ac_origin = w * (min_lag.ps() / w.ps()) - TimePs{w.ps() / 2};
    const TimePs ac_end = min_lag + T * opt.ac_periods;
    auto visibility = [&](std::span<const TimePs> pulses) {
        if (pulses.size() < 2) return Visibility{};
        const Histogram ac = autocorrelation(pulses, ac_end, w, ac_origin);
        if (ac.in_range() == 0) return Visibility{};
        return distinguishability(ac, T, min_lag);
    };
    r.distinguishability_a = visibility(ta);
    r.distinguishability_b = visibility(tb);

    const TimePs xb = opt.xcorr_bin.value_or(T);
    const std::int64_t n = std::max<std::int64_t>(1, opt.xcorr_range.ps() / xb.ps());
    const TimePs x_lo = -(xb * n) - TimePs{xb.ps() / 2};
    r.xcorr = cross_correlation(ta, tb, x_lo, -x_lo, xb);
    return r;
}

} // namespace spadsim
