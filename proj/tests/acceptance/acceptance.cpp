// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "spadsim/analysis.hpp"
#include "spadsim/config.hpp"
#include "spadsim/detector.hpp"
#include "spadsim/experiments.hpp"
#include "spadsim/presets.hpp"
#include "spadsim/qkd.hpp"
#include "spadsim/rng.hpp"
#include "spadsim/sources.hpp"

#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

using namespace spadsim;
using namespace spadsim::literals;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string config_path(const std::string& name) { return std::string(SPADSIM_CONFIG_DIR) + "/" + name; }

template <typename T>
T body_of(const std::string& file)
{
    return std::get<T>(load_scenario(config_path(file)).body);
}

std::uint64_t seed_of(const std::string& file) { return load_scenario(config_path(file)).seed; }

std::vector<TimePs> gaps(const std::vector<TimePs>& t)
{
    std::vector<TimePs> g;
    for (std::size_t i = 1; i < t.size(); ++i) g.push_back(t[i] - t[i - 1]);
    return g;
}

// ---------------------------------------------------------------------------

Verdict circuit_timing_exact()
{
    const auto t = circuit_timing({6_ns, 4.5_ns, 0.5_ns, 0.5_ns, 12_ns});
    const bool tw = t.tau_twilight == 5.5_ns;
    const bool q = t.tau_quench == 10.5_ns;
    const bool d = t.tau_dead == 21.5_ns;
    return {tw && q && d, fmt::format("twilight {} ns (want 5.5) {}, quench {} ns (want 10.5) {}, dead {} ns (want 21.5) {}",
                                      t.tau_twilight.ns(), tw ? "ok" : "MISMATCH", t.tau_quench.ns(), q ? "ok" : "MISMATCH",
                                      t.tau_dead.ns(), d ? "ok" : "MISMATCH")};
}

Verdict interarrival_round_trip()
{
    const auto c = body_of<InterarrivalConfig>("spcm_interarrival.json");
    const auto r = run_interarrival(c, seed_of("spcm_interarrival.json"));
    const double dead_ns = r.dead_time.ns();
    const double p = r.afterpulse.p_afterpulse;
    const double tau_ns = r.afterpulse.tau_trap.ns();
    const double dark_sigma = std::sqrt(726.0 / r.dark->duration_s);
    const bool ok_n = r.detected >= 60'000;
    const bool ok_dead = std::abs(dead_ns - 29.1) <= 0.5;
    const bool ok_p = std::abs(p - 0.0068) <= 0.0015;
    const bool ok_tau = std::abs(tau_ns - 32.0) <= 4.0;
    const bool ok_dark = std::abs(r.dark->rate - 726.0) <= 3.0 * dark_sigma;
    return {ok_n && ok_dead && ok_p && ok_tau && ok_dark,
            fmt::format("{} events; dead {:.2f} ns; p_A {:.3f}%; tau_trap {:.2f} ns; dark {:.1f} cps ({:+.2f} sigma)", r.detected, dead_ns,
                        100.0 * p, tau_ns, r.dark->rate, (r.dark->rate - 726.0) / dark_sigma)};
}

Verdict pair_jitter_law()
{
    const auto c = body_of<PairScanExperimentConfig>("spcm_pair_scan.json");
    const auto r = run_pair_scan(c, seed_of("spcm_pair_scan.json"));
    const auto& pts = r.shift_jitter.points;
    if (pts.empty()) return {false, "no pair-scan points"};
    const auto& far = *std::max_element(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.delta_t < b.delta_t; });
    return {std::abs(far.fwhm_ps - 472.0) <= 15.0,
            fmt::format("delta_t {} ns: FWHM {:.1f} ps over {} pairs (want 472 +- 15)", far.delta_t.ns(), far.fwhm_ps, far.n)};
}

// Transmitted iff no earlier transmitted pulse lies within t_b, checked against all of them.
std::vector<TimePs> blanking_reference(const std::vector<TimePs>& in, TimePs t_b)
{
    std::vector<TimePs> out;
    for (const TimePs t : in) {
        bool keep = true;
        for (const TimePs s : out) keep = keep && !(t - s < t_b);
        if (keep) out.push_back(t);
    }
    return out;
}

Verdict blanking_invariant()
{
    DetectorParams p = preset("custom-aq").params;
    RngStream root(404, 0);
    const double photons = incident_rate_for(30e6, p);
    const auto arrivals = cw_poisson_stream({photons, 50_ms}, root);
    Detector det(p, root.split(1));
    const auto out = out_times(det.run(arrivals, 50_ms));
    const auto g = gaps(out);
    const auto violations = std::count_if(g.begin(), g.end(), [](TimePs x) { return x < 24_ns; });
    const TimePs min_gap = g.empty() ? TimePs::zero() : *std::min_element(g.begin(), g.end());

    RngStream rng(405, 0);
    std::size_t mismatched = 0;
    for (int trial = 0; trial < 10'000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.engine()() % 60);
        std::vector<TimePs> train;
        for (std::size_t i = 0; i < n; ++i) train.push_back(TimePs{static_cast<std::int64_t>(rng.uniform() * 200'000)});
        std::sort(train.begin(), train.end());
        const TimePs t_b{1 + static_cast<std::int64_t>(rng.uniform() * 40'000)};
        if (blanking_filter(train, t_b) != blanking_reference(train, t_b)) ++mismatched;
    }
    return {out.size() >= 1'000'000 && violations == 0 && mismatched == 0,
            fmt::format("{} output pulses, min gap {} ns, {} violations; {} of 10000 random trains differ from the reference", out.size(),
                        min_gap.ns(), violations, mismatched)};
}

Verdict twilight_placement()
{
    const auto sc = body_of<PairScanExperimentConfig>("spcm_twilight.json");
    const auto spcm = run_pair_scan(sc, seed_of("spcm_twilight.json"));
    const auto cc = body_of<PairScanExperimentConfig>("custom_twilight.json");
    const auto custom = run_pair_scan(cc, seed_of("custom_twilight.json"));

    const DetectorParams& sp = sc.detector.params;
    std::uint64_t inside = 0;
    std::uint64_t early = 0;
    std::uint64_t seconds = 0;
    for (std::size_t i = 0; i < spcm.points.size(); ++i) {
        const TimePs dt = sc.delta_ts[i];
        if (!(dt > sp.tau_quench && dt < sp.tau_dead0)) continue;
        ++inside;
        early += spcm.points[i].early_second;
        seconds += spcm.points[i].counts.both_detected;
    }
    const bool ok_place = inside > 0 && seconds > 0 && early == 0;
    const bool ok_custom = custom.twilight_window && *custom.twilight_window < 1.5_ns;
    const bool ok_spcm = spcm.twilight_window && *spcm.twilight_window >= 5_ns;
    auto show = [](const std::optional<TimePs>& w) { return w ? fmt::format("{:.2f} ns", w->ns()) : std::string("never reaches 90%"); };
    return {ok_place && ok_custom && ok_spcm,
            fmt::format("{} of {} twilight second pulses before the dead-period end over {} separations; window custom-aq {}, "
                        "spcm-aqrh {}",
                        early, seconds, inside, show(custom.twilight_window), show(spcm.twilight_window))};
}

Verdict dead_time_elongation()
{
    const DetectorParams p = preset("custom-aq").params;
    const TimePs low = effective_dead_time(0.0, p);
    const TimePs high = effective_dead_time(30e6, p);
    bool ok = low == 21.5_ns && high == 23.5_ns;
    std::string detail = fmt::format("table {} ns at 0 cps, {} ns at 30 Mcps; blanked min gap", low.ns(), high.ns());
    RngStream root(606, 0);
    std::uint64_t stream = 1;
    for (const double rate : {1e5, 1e6, 1e7, 3e7}) {
        const TimePs duration{static_cast<std::int64_t>(std::ceil(1.3e6 / rate * 1e12))};
        const auto arrivals = cw_poisson_stream({incident_rate_for(rate, p), duration}, root);
        Detector det(p, root.split(stream++));
        const auto g = gaps(out_times(det.run(arrivals, duration)));
        const TimePs m = *std::min_element(g.begin(), g.end());
        // "24.0 ns" to the quoted resolution
        ok = ok && g.size() >= 1'000'000 && m >= 24_ns && m - 24_ns < TimePs{50};
        detail += fmt::format(" {:.3f} ns @ {:g} cps ({} gaps);", m.ns(), rate, g.size());
    }
    detail.pop_back();
    return {ok, detail};
}

Verdict shift_recovery()
{
    const DetectorParams p = preset("spcm-aqrh").params;
    double worst = 0.0;
    for (TimePs dt = 50_ns + TimePs{1}; dt <= 10_us; dt = dt + 250_ps) worst = std::max(worst, p.shift_curve(static_cast<double>(dt.ps())));
    worst = std::max(worst, p.shift_curve(1e12));

    auto c = body_of<JitterScanConfig>("spcm_jitter_scan.json");
    c.count_rates = {c.count_rates.front(), 4e6};
    const auto r = run_jitter_scan(c, seed_of("spcm_jitter_scan.json"));
    const double shift = r.points.back().shift_ps;
    return {worst < 100.0 && std::abs(shift - 855.0) <= 50.0,
            fmt::format("largest table shift beyond 50 ns {:.1f} ps; jitter-scan peak shift at 4 Mcps {:.1f} ps (want 855 +- 50)", worst,
                        shift)};
}

Verdict key_rate_formula()
{
    RngStream rng(808, 0);
    int failures = 0;
    auto rel = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    for (int i = 0; i < 100; ++i) {
        KeyRateInputs k{1.0 + std::floor(rng.uniform() * 8), rng.uniform(), rng.uniform() * 0.1, 1.0 + rng.uniform() * 15,
                        TimePs{1 + static_cast<std::int64_t>(rng.uniform() * 2000)}};
        const double base = secret_key_rate(k);
        const double s = 0.5 + 3.0 * rng.uniform();
        KeyRateInputs m = k;
        m.m_channels *= s;
        KeyRateInputs x = k;
        x.xi *= s;
        KeyRateInputs n = k;
        n.n_mean *= s;
        KeyRateInputs e = k;
        e.eta = k.eta * 0.5;
        KeyRateInputs t = k;
        t.delta_t = k.delta_t * 2;
        const double oracle = k.m_channels * k.eta * k.eta * k.n_mean * k.xi / (static_cast<double>(k.delta_t.ps()) * 1e-12);
        const bool ok = rel(base, oracle) && rel(secret_key_rate(m), s * base) && rel(secret_key_rate(x), s * base) &&
                        rel(secret_key_rate(n), s * base) && rel(secret_key_rate(e), 0.25 * base) && rel(secret_key_rate(t), 0.5 * base);
        failures += ok ? 0 : 1;
    }
    const double hand = secret_key_rate({1.0, 0.1, 0.001, 8.0, 260_ps});
    const double want = 1.0 * 0.1 * 0.1 * 0.001 * 8.0 / 260e-12;
    const bool ok_hand = std::abs(hand - want) <= 4.0 * std::numeric_limits<double>::epsilon() * want;
    return {failures == 0 && ok_hand && std::round(hand / 100.0) == 3077.0,
            fmt::format("{} of 100 random inputs break the scaling laws; hand example {:.6g} bit/s", failures, hand)};
}

QkdConfig qkd_config(const std::string& det, TimePs period, double mu, TimePs duration)
{
    json j{{"version", 1},
           {"experiment", "qkd"},
           {"seed", 1},
           {"detector", det},
           {"source",
            {{"period_ps", period.ps()}, {"mean_pairs_per_pulse", mu}, {"eta_alice", 0.5}, {"eta_bob", 0.5}, {"emission_fwhm_ps", 5.0}, {"duration_ps", duration.ps()}}},
           {"frame", {{"bins_per_frame", 1024}}}};
    return std::get<QkdConfig>(parse_scenario(j).body);
}

Verdict qkd_ordering()
{
    const TimePs fr = multiplied_period(16);
    const auto custom = run_qkd(qkd_config("custom-aq", fr, 0.01, 20_ms), 91);
    const auto spcm = run_qkd(qkd_config("spcm-aqrh", fr, 0.01, 20_ms), 91);
    const double margin = custom.distinguishability_a.value - spcm.distinguishability_a.value;
    const bool ok_margin = margin > 0.2;

    // Constant photon flux: pairs per pulse scale with the period.
    const double pair_rate = 0.002 / (static_cast<double>(fr.ps()) * 1e-12);
    std::vector<Visibility> vis;
    std::string sweep;
    for (const TimePs t : {1042_ps, 750_ps, 521_ps, 400_ps, 260_ps}) {
        const auto r = run_qkd(qkd_config("spcm-aqrh", t, pair_rate * static_cast<double>(t.ps()) * 1e-12, 100_ms), 92);
        vis.push_back(r.distinguishability_a);
        sweep += fmt::format(" {}ps:{:.3f}", t.ps(), r.distinguishability_a.value);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < vis.size(); ++i) {
        const double sigma = std::hypot(vis[i].error, vis[i - 1].error);
        monotone = monotone && vis[i].value <= vis[i - 1].value + 3.0 * sigma;
    }
    const bool drop = vis.front().value - vis.back().value > 3.0 * std::hypot(vis.front().error, vis.back().error);

    const auto spd = run_qkd(qkd_config("spd-050", fr, 0.01, 20_ms), 91);
    const bool rates = std::min(custom.singles_rate_a, spd.singles_rate_a) >= 2e6;
    const bool herald = custom.heralding > spd.heralding;
    return {ok_margin && monotone && drop && rates && herald,
            fmt::format("distinguishability custom-aq {:.3f} vs spcm-aqrh {:.3f} (margin {:.3f}); spcm-aqrh vs period{}; heralding "
                        "custom-aq {:.4f} @ {:.2f} Mcps vs spd-050 {:.4f} @ {:.2f} Mcps",
                        custom.distinguishability_a.value, spcm.distinguishability_a.value, margin, sweep, custom.heralding,
                        custom.singles_rate_a * 1e-6, spd.heralding, spd.singles_rate_a * 1e-6)};
}

Verdict xcorr_twilight_peak()
{
    const TimePs fr = multiplied_period(16);
    auto z_for = [&](const std::string& det) {
        auto c = qkd_config(det, fr, 0.002, 300_ms);
        const auto r = run_qkd(c, 2026);
        return dead_time_peak(r.xcorr, blind_period(c.detector_b.params)).z;
    };
    const double z_spcm = z_for("spcm-aqrh");
    const double z_custom = z_for("custom-aq");
    return {z_spcm > 3.0 && z_custom < 1.0,
            fmt::format("excess after the dead time: spcm-aqrh {:.2f} sigma, custom-aq {:.2f} sigma", z_spcm, z_custom)};
}

std::string render(const ScenarioOutput& o)
{
    std::string s = o.summary.dump(2);
    for (const auto& m : o.metrics) s += format_metric(m) + "\n";
    if (o.histogram_csv) s += *o.histogram_csv;
    if (o.curve_csv) s += *o.curve_csv;
    return s;
}

Verdict determinism()
{
    std::vector<std::string> differing;
    std::size_t checked = 0;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(SPADSIM_CONFIG_DIR)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const Scenario s = load_scenario(f.string());
        const std::string first = render(run_scenario(s));
        setenv("SPADSIM_THREADS", "1", 1);
        const std::string second = render(run_scenario(s));
        unsetenv("SPADSIM_THREADS");
        ++checked;
        if (first != second || first.empty()) differing.push_back(f.filename().string());
    }
    std::string which;
    for (const auto& d : differing) which += " " + d;
    return {differing.empty() && checked > 0,
            fmt::format("{} shipped scenarios run twice (second run single-threaded); {} differ{}", checked, differing.size(), which)};
}

} // namespace

int main()
{
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {1, circuit_timing_exact},   {2, interarrival_round_trip}, {3, pair_jitter_law},     {4, blanking_invariant},
        {5, twilight_placement},     {6, dead_time_elongation},    {7, shift_recovery},      {8, key_rate_formula},
        {9, qkd_ordering},           {10, xcorr_twilight_peak},    {11, determinism},
    };
    int failed = 0;
    for (const auto& [n, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, fmt::format("threw: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fmt::print("criterion {:>2}: {}  {} [{:.1f} s]\n", n, v.pass ? "PASS" : "FAIL", v.detail, secs);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
