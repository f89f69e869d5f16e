#include "spadsim/experiments.hpp"

#include "spadsim/detector.hpp"
#include "spadsim/parallel.hpp"
#include "spadsim/sources.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace spadsim {

using nlohmann::json;

namespace {

constexpr std::int64_t kUnset = -1;

std::vector<TimePs> merge_sorted(const std::vector<TimePs>& a, const std::vector<TimePs>& b)
{
    std::vector<TimePs> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

// Median bin content, used as the flat background under a TAC peak.
double median_count(const Histogram& h)
{
    std::vector<std::uint64_t> c = h.counts;
    if (c.empty()) return 0.0;
    const auto mid = c.begin() + static_cast<std::ptrdiff_t>(c.size() / 2);
    std::nth_element(c.begin(), mid, c.end());
    return static_cast<double>(*mid);
}

} // namespace

InterarrivalResult run_interarrival(const InterarrivalConfig& c, std::uint64_t seed)
{
    RngStream root(seed, 0);
    RngStream src_rng = root.split(1);
    RngStream tac_rng = root.split(3);

    const auto photons = cw_poisson_stream(c.source, src_rng);
    Detector det(c.detector.params, root.split(2));
    const auto pulses = out_times(det.run(photons, c.source.duration));

    InterarrivalResult r;
    r.detected = pulses.size();
    r.count_rate = static_cast<double>(pulses.size()) / c.source.duration.seconds();
    r.histogram = Histogram(c.bin_width, TimePs::zero(),
                            static_cast<std::size_t>((c.range.ps() + c.bin_width.ps() - 1) / c.bin_width.ps()));
    for (std::size_t i = 1; i < pulses.size(); ++i) {
        r.histogram.add(sample_gaussian_fwhm(tac_rng, pulses[i] - pulses[i - 1], c.tac_fwhm_ps));
    }
    if (r.histogram.in_range() == 0) throw std::runtime_error("interarrival: no intervals inside the histogram range");
    r.dead_time = estimate_dead_time(r.histogram);
    r.afterpulse = afterpulse_spectroscopy(r.histogram, r.dead_time, c.afterpulse);

    if (c.dark_duration.ps() > 0) {
        Detector dark(c.detector.params, root.split(4));
        const auto n = dark.run({}, c.dark_duration).size();
        DarkMeasurement d;
        d.counts = n;
        d.duration_s = c.dark_duration.seconds();
        d.rate = static_cast<double>(n) / d.duration_s;
        d.rate_error = std::sqrt(static_cast<double>(n)) / d.duration_s;
        r.dark = d;
    }
    return r;
}

double incident_rate_for(double detected_rate, const DetectorParams& p)
{
    const double tau = p.tau_dead0.seconds();
    if (!(detected_rate > 0.0) || detected_rate * tau >= 1.0) {
        throw std::invalid_argument(fmt::format("detected rate {} /s is not reachable with a {} ns dead time", detected_rate,
                                                p.tau_dead0.ns()));
    }
    return detected_rate / (1.0 - detected_rate * tau) / p.efficiency;
}

JitterScanResult run_jitter_scan(const JitterScanConfig& c, std::uint64_t seed)
{
    JitterScanResult res;
    res.points.resize(c.count_rates.size());
    const RngStream root(seed, 0);
    parallel_for(c.count_rates.size(), [&](std::size_t i) {
        RngStream pr = root.split(i);
        RngStream laser_rng = pr.split(1);
        RngStream led_rng = pr.split(2);
        RngStream tac_rng = pr.split(4);
        const double photons = incident_rate_for(c.count_rates[i], c.detector.params);

        PulsedSourceConfig laser;
        laser.period = c.laser_period;
        laser.pulse_fwhm_ps = c.pulse_fwhm_ps;
        laser.mean_photons_per_pulse = c.laser_fraction * photons * c.laser_period.seconds();
        laser.duration = c.duration;
        std::vector<TimePs> arrivals = pulsed_train(laser, laser_rng);
        if (c.laser_fraction < 1.0) {
            CwSourceConfig led{(1.0 - c.laser_fraction) * photons, c.duration};
            arrivals = merge_sorted(arrivals, cw_poisson_stream(led, led_rng));
        }
        Detector det(c.detector.params, pr.split(3));
        const auto stops = out_times(det.run(arrivals, c.duration));

        // Sync pulses of periods that contain no stop cannot convert, so only
        // the ones directly preceding a stop are passed on.
        std::vector<TimePs> starts;
        for (const TimePs s : stops) {
            const TimePs k = c.laser_period * ((s.ps() - 1) / c.laser_period.ps());
            if (starts.empty() || starts.back() != k) starts.push_back(k);
        }
        const auto tac = tac_measure(starts, stops, TacConfig{c.laser_period, c.tac_fwhm_ps}, tac_rng);
        Histogram h = build_histogram(tac, c.bin_width, c.laser_period);
        const double bg = median_count(h);
        for (auto& n : h.counts) n = static_cast<std::uint64_t>(std::max(0.0, std::round(static_cast<double>(n) - bg)));
        const GaussianFit g = gaussian_fit(h);

        JitterPoint& pt = res.points[i];
        pt.target_rate = c.count_rates[i];
        pt.measured_rate = static_cast<double>(stops.size()) / c.duration.seconds();
        pt.laser_events = tac.size();
        pt.peak_ps = g.peak_ps;
        pt.fwhm_ps = g.fwhm_ps;
    });
    for (auto& p : res.points) p.shift_ps = p.peak_ps - res.points.front().peak_ps;
    return res;
}

PairScanResult run_pair_scan(const PairScanExperimentConfig& c, std::uint64_t seed)
{
    PairScanResult res;
    res.points.resize(c.delta_ts.size());
    const RngStream root(seed, 0);
    parallel_for(c.delta_ts.size(), [&](std::size_t i) {
        RngStream pr = root.split(i);
        RngStream src_rng = pr.split(1);
        RngStream tac_rng = pr.split(3);
        const PairScanConfig sc{c.delta_ts[i], c.pair_period, c.occupancy, c.pairs, c.pulse_fwhm_ps};
        const PairArrivals arr = pulse_pair_sequence(sc, src_rng);
        const TimePs duration = c.pair_period * static_cast<std::int64_t>(c.pairs);
        Detector det(c.detector.params, pr.split(2));
        const auto pulses = det.run(arr.times, duration);

        std::vector<std::int64_t> first(c.pairs, kUnset);
        std::vector<std::int64_t> second(c.pairs, kUnset);
        for (const auto& p : pulses) {
            if (p.source == kNoSource || (p.cause != PulseCause::Photon && p.cause != PulseCause::Twilight)) continue;
            auto& slot = arr.slot[p.source] == PairSlot::First ? first : second;
            auto& v = slot[arr.pair[p.source]];
            if (v == kUnset) v = p.out_time.ps();
        }

        PairScanPoint& pt = res.points[i];
        pt.counts.delta_t = c.delta_ts[i];
        pt.counts.pairs = c.pairs;
        pt.intervals.delta_t = c.delta_ts[i];
        for (std::uint64_t k = 0; k < c.pairs; ++k) {
            if (first[k] == kUnset) continue;
            ++pt.counts.first_detected;
            if (second[k] == kUnset) continue;
            ++pt.counts.both_detected;
            const TimePs gap{second[k] - first[k]};
            if (!pt.min_interval || gap < *pt.min_interval) pt.min_interval = gap;
            if (gap < c.detector.params.tau_dead0) ++pt.early_second;
            pt.intervals.intervals.push_back(sample_gaussian_fwhm(tac_rng, gap, c.tac_fwhm_ps));
        }
    });

    std::vector<PairCounts> counts;
    std::vector<PairIntervals> intervals;
    for (const auto& p : res.points) {
        counts.push_back(p.counts);
        intervals.push_back(p.intervals);
    }
    res.twilight = twilight_curve(counts);
    try {
        res.twilight_window = twilight_window(res.twilight);
    } catch (const std::runtime_error&) {
        res.twilight_window.reset();
    }
    res.shift_jitter = shift_and_jitter_vs_dt(intervals, c.min_pairs, c.bin_width);
    return res;
}

AutocorrResult run_autocorr(const AutocorrConfig& c, std::uint64_t seed)
{
    RngStream root(seed, 0);
    RngStream src_rng = root.split(1);
    const auto photons = pulsed_train(c.source, src_rng);
    Detector det(c.detector.params, root.split(2));
    const auto pulses = out_times(det.run(photons, c.source.duration));

    AutocorrResult r;
    r.detected = pulses.size();
    r.count_rate = static_cast<double>(pulses.size()) / c.source.duration.seconds();
    const TimePs T = c.source.period;
    const TimePs min_lag = c.min_lag.value_or(blind_period(c.detector.params) + TimePs{2'000});
    const TimePs w{std::max<std::int64_t>(1, T.ps() / c.bins_per_period)};
    const TimePs origin = w * (min_lag.ps() / w.ps()) - TimePs{w.ps() / 2};
    r.histogram = autocorrelation(pulses, min_lag + T * c.periods, w, origin);
    r.distinguishability = distinguishability(r.histogram, T, min_lag);
    return r;
}

QkdReport run_qkd(const QkdConfig& c, std::uint64_t seed)
{
    RngStream root(seed, 0);
    return run_qkd_scenario(c.source, c.detector_a.params, c.detector_b.params, c.frame, c.duration, root, c.options);
}

// ---------------------------------------------------------------------------

namespace {

json metrics_json(const std::vector<Metric>& ms)
{
    json a = json::array();
    for (const auto& m : ms) {
        json j{{"name", m.name}, {"value", m.value}, {"unit", m.unit}};
        if (m.error) j["error"] = *m.error;
        a.push_back(std::move(j));
    }
    return a;
}

std::string histogram_text(const Histogram& h)
{
    std::ostringstream os;
    h.write_csv(os);
    return os.str();
}

std::string dt_label(TimePs dt) { return fmt::format("{}ps", dt.ps()); }

void run_interarrival_scenario(const Scenario& s, const InterarrivalConfig& c, ScenarioOutput& out)
{
    const auto r = run_interarrival(c, s.seed);
    auto& m = out.metrics;
    m.push_back({"detected_events", static_cast<double>(r.detected), std::nullopt, "events"});
    m.push_back({"count_rate", r.count_rate, std::nullopt, "1/s"});
    m.push_back({"dead_time", r.dead_time.ns(), std::nullopt, "ns"});
    m.push_back({"afterpulse_probability", r.afterpulse.p_afterpulse, r.afterpulse.p_error, ""});
    m.push_back({"trap_lifetime", r.afterpulse.tau_trap.ns(), std::nullopt, "ns"});
    m.push_back({"afterpulse_fit_residual", r.afterpulse.residual, std::nullopt, "chi2/dof"});
    if (r.dark) m.push_back({"dark_rate", r.dark->rate, r.dark->rate_error, "1/s"});
    out.summary["analysis"] = {{"single_lifetime_ok", r.afterpulse.single_lifetime_ok},
                               {"afterpulse_significant", r.afterpulse.significant},
                               {"background_tau_ps", r.afterpulse.background_tau_ps},
                               {"histogram_underflow", r.histogram.underflow},
                               {"histogram_overflow", r.histogram.overflow}};
    if (s.outputs.histogram_csv) out.histogram_csv = histogram_text(r.histogram);
}

void run_jitter_scenario(const Scenario& s, const JitterScanConfig& c, ScenarioOutput& out)
{
    const auto r = run_jitter_scan(c, s.seed);
    json pts = json::array();
    std::ostringstream csv;
    csv << "target_rate,measured_rate,peak_ps,shift_ps,fwhm_ps,events\n";
    for (const auto& p : r.points) {
        const std::string tag = fmt::format("@{:g}", p.target_rate);
        out.metrics.push_back({"measured_rate" + tag, p.measured_rate, std::nullopt, "1/s"});
        out.metrics.push_back({"peak_shift" + tag, p.shift_ps, std::nullopt, "ps"});
        out.metrics.push_back({"jitter_fwhm" + tag, p.fwhm_ps, std::nullopt, "ps"});
        pts.push_back({{"target_rate", p.target_rate},
                       {"measured_rate", p.measured_rate},
                       {"peak_ps", p.peak_ps},
                       {"shift_ps", p.shift_ps},
                       {"fwhm_ps", p.fwhm_ps},
                       {"events", p.laser_events}});
        csv << fmt::format("{},{},{},{},{},{}\n", p.target_rate, p.measured_rate, p.peak_ps, p.shift_ps, p.fwhm_ps,
                           p.laser_events);
    }
    out.summary["points"] = std::move(pts);
    if (s.outputs.curve_csv) out.curve_csv = csv.str();
}

void run_pair_scenario(const Scenario& s, const PairScanExperimentConfig& c, ScenarioOutput& out)
{
    const auto r = run_pair_scan(c, s.seed);
    json pts = json::array();
    std::uint64_t early = 0;
    for (const auto& p : r.points) {
        early += p.early_second;
        json j{{"delta_t_ps", p.counts.delta_t.ps()},
               {"pairs", p.counts.pairs},
               {"first_detected", p.counts.first_detected},
               {"both_detected", p.counts.both_detected},
               {"early_second", p.early_second}};
        if (p.min_interval) j["min_interval_ps"] = p.min_interval->ps();
        pts.push_back(std::move(j));
    }
    out.summary["points"] = std::move(pts);
    out.metrics.push_back({"second_pulses_inside_dead_time", static_cast<double>(early), std::nullopt, "pulses"});

    if (s.kind == ExperimentKind::Twilight) {
        if (r.twilight_window) {
            out.metrics.push_back({"twilight_window", r.twilight_window->ns(), std::nullopt, "ns"});
        } else {
            out.summary["twilight_window_note"] = "relative efficiency never reaches 90%";
        }
        for (const auto& p : r.twilight.points) {
            out.metrics.push_back(
                {"relative_efficiency@" + dt_label(TimePs{static_cast<std::int64_t>(p.x)}), p.y, p.err, ""});
        }
        if (s.outputs.curve_csv) {
            std::ostringstream os;
            write_curve_csv(os, r.twilight.points, "delta_t_ps", "relative_efficiency", true);
            out.curve_csv = os.str();
        }
    } else {
        std::ostringstream csv;
        csv << "delta_t_ps,shift_ps,fwhm_ps,n\n";
        for (const auto& p : r.shift_jitter.points) {
            out.metrics.push_back({"shift@" + dt_label(p.delta_t), p.shift_ps, std::nullopt, "ps"});
            out.metrics.push_back({"pair_fwhm@" + dt_label(p.delta_t), p.fwhm_ps, std::nullopt, "ps"});
            csv << fmt::format("{},{},{},{}\n", p.delta_t.ps(), p.shift_ps, p.fwhm_ps, p.n);
        }
        json missing = json::array();
        for (const auto& t : r.shift_jitter.missing) missing.push_back(t.ps());
        out.summary["too_few_pairs_ps"] = std::move(missing);
        if (s.outputs.curve_csv) out.curve_csv = csv.str();
    }
}

void run_qkd_scenario_output(const Scenario& s, const QkdConfig& c, ScenarioOutput& out)
{
    const QkdReport r = run_qkd(c, s.seed);
    auto& m = out.metrics;
    m.push_back({"singles_rate_a", r.singles_rate_a, std::nullopt, "1/s"});
    m.push_back({"singles_rate_b", r.singles_rate_b, std::nullopt, "1/s"});
    m.push_back({"coincidence_rate", r.coincidence_rate, std::nullopt, "1/s"});
    m.push_back({"raw_key_rate", r.raw_key_rate, std::nullopt, "bit/s"});
    m.push_back({"timing_ber", r.timing_ber, std::nullopt, ""});
    m.push_back({"lab_ber", r.lab_ber, std::nullopt, ""});
    m.push_back({"distinguishability_a", r.distinguishability_a.value, r.distinguishability_a.error, ""});
    m.push_back({"distinguishability_b", r.distinguishability_b.value, r.distinguishability_b.error, ""});
    m.push_back({"heralding_efficiency", r.heralding, std::nullopt, ""});
    try {
        const PeakExcess pk = dead_time_peak(r.xcorr, blind_period(c.detector_b.params));
        m.push_back({"xcorr_dead_time_excess_z", pk.z, std::nullopt, "sigma"});
        out.summary["xcorr_dead_time_peak"] = {{"cluster", pk.cluster}, {"expected", pk.expected}, {"z", pk.z}};
    } catch (const std::runtime_error& e) {
        out.summary["xcorr_dead_time_peak"] = e.what();
    }
    out.summary["report"] = {{"duration_s", r.duration_s},
                             {"rep_rate", r.rep_rate},
                             {"bins_per_frame", r.bins_per_frame},
                             {"pairs_created", r.pairs_created},
                             {"singles_a", r.singles_a},
                             {"singles_b", r.singles_b},
                             {"coincidences", r.coincidences},
                             {"true_coincidences", r.true_coincidences},
                             {"latency_a_ps", r.latency_a.ps()},
                             {"latency_b_ps", r.latency_b.ps()}};
    if (s.outputs.histogram_csv) out.histogram_csv = histogram_text(r.xcorr);
}

} // namespace

ScenarioOutput run_scenario(const Scenario& s)
{
    ScenarioOutput out;
    out.summary["version"] = kConfigVersion;
    out.summary["experiment"] = std::string(to_string(s.kind));
    out.summary["seed"] = s.seed;
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, InterarrivalConfig>) {
                out.summary["detector"] = c.detector.label;
                run_interarrival_scenario(s, c, out);
            } else if constexpr (std::is_same_v<T, JitterScanConfig>) {
                out.summary["detector"] = c.detector.label;
                run_jitter_scenario(s, c, out);
            } else if constexpr (std::is_same_v<T, PairScanExperimentConfig>) {
                out.summary["detector"] = c.detector.label;
                run_pair_scenario(s, c, out);
            } else if constexpr (std::is_same_v<T, AutocorrConfig>) {
                out.summary["detector"] = c.detector.label;
                const auto r = run_autocorr(c, s.seed);
                out.metrics.push_back({"count_rate", r.count_rate, std::nullopt, "1/s"});
                out.metrics.push_back({"distinguishability", r.distinguishability.value, r.distinguishability.error, ""});
                if (s.outputs.histogram_csv) out.histogram_csv = histogram_text(r.histogram);
            } else if constexpr (std::is_same_v<T, QkdConfig>) {
                out.summary["detector_a"] = c.detector_a.label;
                out.summary["detector_b"] = c.detector_b.label;
                run_qkd_scenario_output(s, c, out);
            } else {
                out.metrics.push_back({"secret_key_rate", secret_key_rate(c.inputs), std::nullopt, "bit/s"});
            }
        },
        s.body);
    out.summary["metrics"] = metrics_json(out.metrics);
    return out;
}

std::string format_metric(const Metric& m)
{
    std::string s = fmt::format("{} = {:.6g}", m.name, m.value);
    if (m.error) s += fmt::format(" +/- {:.2g}", *m.error);
    if (!m.unit.empty()) s += " " + m.unit;
    return s;
}

} // namespace spadsim
