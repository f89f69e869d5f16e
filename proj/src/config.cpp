#include "spadsim/config.hpp"

#include "spadsim/presets.hpp"

#include <fmt/core.h>
#include <fmt/ranges.h>

#include <fstream>
#include <set>
#include <sstream>

namespace spadsim {

using nlohmann::json;

std::string_view to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Interarrival: return "interarrival";
    case ExperimentKind::JitterScan: return "jitter-scan";
    case ExperimentKind::PairScan: return "pair-scan";
    case ExperimentKind::Twilight: return "twilight";
    case ExperimentKind::Autocorr: return "autocorr";
    case ExperimentKind::Qkd: return "qkd";
    case ExperimentKind::KeyRate: return "keyrate";
    }
    return "unknown";
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what)
{
    throw ConfigError(fmt::format("config error at {}: {}", where.empty() ? "<root>" : where, what));
}

/// Strict view of one JSON object: every key must be consumed before finish().
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    std::string at(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    bool has(const char* key) const { return j_.contains(key); }

    const json& raw(const char* key)
    {
        if (!j_.contains(key)) fail(at(key), "missing required field");
        used_.insert(key);
        return j_.at(key);
    }

    std::optional<std::reference_wrapper<const json>> maybe(const char* key)
    {
        if (!j_.contains(key)) return std::nullopt;
        used_.insert(key);
        return std::cref(j_.at(key));
    }

    double real(const char* key) { return as_real(raw(key), at(key)); }
    double real(const char* key, double def) { return has(key) ? real(key) : def; }

    std::int64_t integer(const char* key) { return as_int(raw(key), at(key)); }
    std::int64_t integer(const char* key, std::int64_t def) { return has(key) ? integer(key) : def; }

    TimePs ps(const char* key) { return TimePs{integer(key)}; }
    TimePs ps(const char* key, TimePs def) { return has(key) ? ps(key) : def; }

    std::string str(const char* key)
    {
        const json& v = raw(key);
        if (!v.is_string()) fail(at(key), "expected a string");
        return v.get<std::string>();
    }

    bool boolean(const char* key, bool def)
    {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_boolean()) fail(at(key), "expected true or false");
        return v.get<bool>();
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) fail(at(it.key()), "unknown key");
        }
    }

    static double as_real(const json& v, const std::string& where)
    {
        if (!v.is_number()) fail(where, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(where, "expected a finite number");
        return d;
    }

    static std::int64_t as_int(const json& v, const std::string& where)
    {
        if (!v.is_number_integer()) fail(where, "expected an integer (durations are integer picoseconds)");
        return v.get<std::int64_t>();
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string, std::less<>> used_;
};

PiecewiseLinear table_from_json(const json& v, const std::string& where)
{
    if (!v.is_array()) fail(where, "expected an array of [x, y] pairs");
    std::vector<PiecewiseLinear::Point> pts;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto w = fmt::format("{}[{}]", where, i);
        const json& p = v[i];
        if (!p.is_array() || p.size() != 2) fail(w, "expected an [x, y] pair");
        pts.emplace_back(Fields::as_real(p[0], w + "[0]"), Fields::as_real(p[1], w + "[1]"));
    }
    try {
        return PiecewiseLinear(std::move(pts));
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

json table_to_json(const PiecewiseLinear& t)
{
    json a = json::array();
    for (const auto& [x, y] : t.points()) a.push_back({x, y});
    return a;
}

void apply_detector_fields(Fields& f, DetectorParams& p, bool& afterpulse_probability_set, double& afterpulse_probability)
{
    p.efficiency = f.real("efficiency", p.efficiency);
    p.tau_dead0 = f.ps("tau_dead0_ps", p.tau_dead0);
    if (auto v = f.maybe("dead_elongation")) p.dead_elongation = table_from_json(*v, f.at("dead_elongation"));
    p.tau_quench = f.ps("tau_quench_ps", p.tau_quench);
    if (auto v = f.maybe("twilight_profile")) p.twilight_profile = table_from_json(*v, f.at("twilight_profile"));
    p.twilight_enabled = f.boolean("twilight_enabled", p.twilight_enabled);
    p.base_delay = f.ps("base_delay_ps", p.base_delay);
    if (auto v = f.maybe("jitter_curve")) p.jitter_curve = table_from_json(*v, f.at("jitter_curve"));
    if (auto v = f.maybe("shift_curve")) p.shift_curve = table_from_json(*v, f.at("shift_curve"));
    if (auto v = f.maybe("rate_jitter")) p.rate_jitter = table_from_json(*v, f.at("rate_jitter"));
    if (auto v = f.maybe("rate_shift")) p.rate_shift = table_from_json(*v, f.at("rate_shift"));
    p.rate_window = f.ps("rate_window_ps", p.rate_window);
    p.dark_rate = f.real("dark_rate", p.dark_rate);
    if (auto v = f.maybe("afterpulse")) {
        Fields a(*v, f.at("afterpulse"));
        if (a.has("mu") && a.has("probability")) fail(a.at("probability"), "give either mu or probability, not both");
        p.afterpulse.mu = a.real("mu", p.afterpulse.mu);
        if (a.has("probability")) {
            afterpulse_probability_set = true;
            afterpulse_probability = a.real("probability");
        }
        p.afterpulse.tau_trap = a.ps("tau_trap_ps", p.afterpulse.tau_trap);
        if (a.has("law")) {
            const auto law = a.str("law");
            if (law == "exponential") {
                p.afterpulse.law = ReleaseLaw::Exponential;
            } else if (law == "power-law") {
                p.afterpulse.law = ReleaseLaw::PowerLaw;
            } else {
                fail(a.at("law"), fmt::format("unknown release law '{}' (exponential, power-law)", law));
            }
        }
        p.afterpulse.power_law_exponent = a.real("power_law_exponent", p.afterpulse.power_law_exponent);
        a.finish();
    }
    if (auto v = f.maybe("blanking")) {
        if (v->get().is_null()) {
            p.blanking.reset();
        } else {
            Fields b(*v, f.at("blanking"));
            Blanking bl;
            bl.t_b = b.ps("t_b_ps");
            bl.out_width = b.ps("out_width_ps", TimePs::zero());
            b.finish();
            p.blanking = bl;
        }
    }
}

std::vector<TimePs> delta_list(const json& v, const std::string& where)
{
    std::vector<TimePs> out;
    if (v.is_array()) {
        for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(Fields::as_int(v[i], fmt::format("{}[{}]", where, i)));
    } else {
        Fields r(v, where);
        const TimePs from = r.ps("from_ps");
        const TimePs to = r.ps("to_ps");
        const TimePs step = r.ps("step_ps");
        r.finish();
        if (step.ps() <= 0) fail(where + ".step_ps", "must be > 0");
        if (to < from) fail(where + ".to_ps", "must be >= from_ps");
        for (TimePs t = from; t <= to; t += step) out.push_back(t);
    }
    if (out.empty()) fail(where, "no separations given");
    return out;
}

TimePs period_field(Fields& f)
{
    if (f.has("period_ps") && f.has("rate_factor")) fail(f.at("rate_factor"), "give either period_ps or rate_factor, not both");
    if (f.has("rate_factor")) {
        const auto factor = f.integer("rate_factor");
        try {
            return multiplied_period(static_cast<int>(factor));
        } catch (const std::invalid_argument& e) {
            fail(f.at("rate_factor"), e.what());
        }
    }
    return f.ps("period_ps");
}

template <typename F>
void checked(const std::string& where, F&& fn)
{
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

void read_outputs(Fields& root, OutputPaths& out, std::initializer_list<const char*> allowed)
{
    auto v = root.maybe("outputs");
    if (!v) return;
    Fields o(*v, "outputs");
    for (const char* key : allowed) {
        if (!o.has(key)) continue;
        const std::string path = o.str(key);
        if (path.empty()) fail(o.at(key), "empty path");
        if (std::string_view(key) == "summary_json") out.summary_json = path;
        if (std::string_view(key) == "histogram_csv") out.histogram_csv = path;
        if (std::string_view(key) == "curve_csv") out.curve_csv = path;
    }
    o.finish();
}

std::optional<Fields> section(Fields& root, const char* key)
{
    if (auto v = root.maybe(key)) return Fields(*v, key);
    return std::nullopt;
}

} // namespace

// ---------------------------------------------------------------------------

json detector_to_json(const DetectorParams& p)
{
    json j;
    j["efficiency"] = p.efficiency;
    j["tau_dead0_ps"] = p.tau_dead0.ps();
    j["dead_elongation"] = table_to_json(p.dead_elongation);
    j["tau_quench_ps"] = p.tau_quench.ps();
    j["twilight_profile"] = table_to_json(p.twilight_profile);
    j["twilight_enabled"] = p.twilight_enabled;
    j["base_delay_ps"] = p.base_delay.ps();
    j["jitter_curve"] = table_to_json(p.jitter_curve);
    j["shift_curve"] = table_to_json(p.shift_curve);
    j["rate_jitter"] = table_to_json(p.rate_jitter);
    j["rate_shift"] = table_to_json(p.rate_shift);
    j["rate_window_ps"] = p.rate_window.ps();
    j["dark_rate"] = p.dark_rate;
    j["afterpulse"] = {{"mu", p.afterpulse.mu},
                       {"tau_trap_ps", p.afterpulse.tau_trap.ps()},
                       {"law", p.afterpulse.law == ReleaseLaw::Exponential ? "exponential" : "power-law"},
                       {"power_law_exponent", p.afterpulse.power_law_exponent}};
    if (p.blanking) {
        j["blanking"] = {{"t_b_ps", p.blanking->t_b.ps()}, {"out_width_ps", p.blanking->out_width.ps()}};
    } else {
        j["blanking"] = nullptr;
    }
    return j;
}

DetectorChoice detector_from_json(const json& j, const std::string& where)
{
    DetectorChoice d;
    auto from_preset = [&](const std::string& name, const std::string& w) {
        try {
            d.params = preset(name).params;
        } catch (const std::invalid_argument& e) {
            fail(w, e.what());
        }
        d.label = name;
    };
    if (j.is_string()) {
        from_preset(j.get<std::string>(), where);
        return d;
    }
    Fields f(j, where);
    d.label = "inline";
    if (f.has("preset")) from_preset(f.str("preset"), f.at("preset"));
    bool prob_set = false;
    double prob = 0.0;
    apply_detector_fields(f, d.params, prob_set, prob);
    f.finish();
    checked(where + ".afterpulse", [&] {
        if (prob_set) {
            const TimePs visible_after = d.params.blanking ? std::max(d.params.tau_dead0, d.params.blanking->t_b) : d.params.tau_dead0;
            d.params.afterpulse.mu = calibrate_afterpulse_mu(prob, d.params.afterpulse.tau_trap, visible_after);
        }
    });
    checked(where, [&] { d.params.validate(); });
    return d;
}

Scenario parse_scenario(const json& j)
{
    Fields root(j, "");
    const auto version = root.integer("version");
    if (version != kConfigVersion) fail("version", fmt::format("unsupported version {} (expected {})", version, kConfigVersion));
    const std::string kind = root.str("experiment");
    Scenario sc;
    const auto seed = root.raw("seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
        fail("seed", "expected a non-negative integer");
    }
    sc.seed = seed.get<std::uint64_t>();

    auto detector = [&](const char* key) { return detector_from_json(root.raw(key), key); };

    if (kind == "interarrival") {
        sc.kind = ExperimentKind::Interarrival;
        InterarrivalConfig c;
        c.detector = detector("detector");
        Fields s(root.raw("source"), "source");
        c.source.rate = s.real("rate");
        c.source.duration = s.ps("duration_ps");
        s.finish();
        checked("source", [&] { validate(c.source); });
        if (auto in = section(root, "instrument")) {
            c.bin_width = in->ps("bin_ps", c.bin_width);
            c.range = in->ps("range_ps", c.range);
            c.tac_fwhm_ps = in->real("tac_fwhm_ps", c.tac_fwhm_ps);
            in->finish();
        }
        if (c.bin_width.ps() <= 0) fail("instrument.bin_ps", "must be > 0");
        if (c.range.ps() <= 0) fail("instrument.range_ps", "must be > 0");
        if (!(c.tac_fwhm_ps >= 0.0)) fail("instrument.tac_fwhm_ps", "must be >= 0");
        if (auto an = section(root, "analysis")) {
            c.afterpulse.expected_tau_trap = an->ps("expected_tau_trap_ps", c.afterpulse.expected_tau_trap);
            if (an->has("background_cut_ps")) c.afterpulse.background_cut = an->ps("background_cut_ps");
            c.afterpulse.skip_bins = static_cast<int>(an->integer("skip_bins", c.afterpulse.skip_bins));
            c.afterpulse.residual_threshold = an->real("residual_threshold", c.afterpulse.residual_threshold);
            c.dark_duration = an->ps("dark_duration_ps", c.dark_duration);
            an->finish();
        }
        if (c.afterpulse.expected_tau_trap.ps() <= 0) fail("analysis.expected_tau_trap_ps", "must be > 0");
        if (c.afterpulse.skip_bins < 0) fail("analysis.skip_bins", "must be >= 0");
        if (c.dark_duration.ps() < 0) fail("analysis.dark_duration_ps", "must be >= 0");
        sc.body = std::move(c);
        read_outputs(root, sc.outputs, {"summary_json", "histogram_csv"});
    } else if (kind == "jitter-scan") {
        sc.kind = ExperimentKind::JitterScan;
        JitterScanConfig c;
        c.detector = detector("detector");
        Fields s(root.raw("source"), "source");
        c.laser_period = s.ps("laser_period_ps", c.laser_period);
        c.pulse_fwhm_ps = s.real("pulse_fwhm_ps", c.pulse_fwhm_ps);
        c.laser_fraction = s.real("laser_fraction", c.laser_fraction);
        c.duration = s.ps("duration_ps");
        const json& rates = s.raw("count_rates");
        if (!rates.is_array() || rates.empty()) fail("source.count_rates", "expected a non-empty array of rates");
        for (std::size_t i = 0; i < rates.size(); ++i) {
            c.count_rates.push_back(Fields::as_real(rates[i], fmt::format("source.count_rates[{}]", i)));
        }
        s.finish();
        if (c.laser_period.ps() <= 0) fail("source.laser_period_ps", "must be > 0");
        if (!(c.pulse_fwhm_ps >= 0.0)) fail("source.pulse_fwhm_ps", "must be >= 0");
        if (!(c.laser_fraction > 0.0 && c.laser_fraction <= 1.0)) fail("source.laser_fraction", "must be in (0, 1]");
        if (c.duration.ps() <= 0) fail("source.duration_ps", "must be > 0");
        for (std::size_t i = 0; i < c.count_rates.size(); ++i) {
            const double r = c.count_rates[i];
            if (!(r > 0.0)) fail(fmt::format("source.count_rates[{}]", i), "must be > 0");
            if (i > 0 && !(r > c.count_rates[i - 1])) fail(fmt::format("source.count_rates[{}]", i), "rates must be ascending");
            if (r * c.detector.params.tau_dead0.seconds() >= 1.0) {
                fail(fmt::format("source.count_rates[{}]", i), "rate exceeds the detector's dead-time limit");
            }
        }
        if (auto in = section(root, "instrument")) {
            c.bin_width = in->ps("bin_ps", c.bin_width);
            c.tac_fwhm_ps = in->real("tac_fwhm_ps", c.tac_fwhm_ps);
            in->finish();
        }
        if (c.bin_width.ps() <= 0) fail("instrument.bin_ps", "must be > 0");
        if (!(c.tac_fwhm_ps >= 0.0)) fail("instrument.tac_fwhm_ps", "must be >= 0");
        sc.body = std::move(c);
        read_outputs(root, sc.outputs, {"summary_json", "curve_csv"});
    } else if (kind == "pair-scan" || kind == "twilight") {
        sc.kind = kind == "pair-scan" ? ExperimentKind::PairScan : ExperimentKind::Twilight;
        PairScanExperimentConfig c;
        c.detector = detector("detector");
        Fields s(root.raw("source"), "source");
        c.delta_ts = delta_list(s.raw("delta_t_ps"), "source.delta_t_ps");
        c.pair_period = s.ps("pair_period_ps", c.pair_period);
        c.occupancy = s.real("occupancy", c.occupancy);
        const auto pairs = s.integer("pairs");
        if (pairs <= 0) fail("source.pairs", "must be > 0");
        c.pairs = static_cast<std::uint64_t>(pairs);
        c.pulse_fwhm_ps = s.real("pulse_fwhm_ps", c.pulse_fwhm_ps);
        s.finish();
        for (std::size_t i = 0; i < c.delta_ts.size(); ++i) {
            PairScanConfig probe{c.delta_ts[i], c.pair_period, c.occupancy, c.pairs, c.pulse_fwhm_ps};
            checked(fmt::format("source.delta_t_ps[{}]", i), [&] { validate(probe); });
        }
        if (auto in = section(root, "instrument")) {
            c.tac_fwhm_ps = in->real("tac_fwhm_ps", c.tac_fwhm_ps);
            c.bin_width = in->ps("bin_ps", c.bin_width);
            in->finish();
        }
        if (!(c.tac_fwhm_ps >= 0.0)) fail("instrument.tac_fwhm_ps", "must be >= 0");
        if (c.bin_width.ps() <= 0) fail("instrument.bin_ps", "must be > 0");
        if (auto an = section(root, "analysis")) {
            const auto mp = an->integer("min_pairs", static_cast<std::int64_t>(c.min_pairs));
            if (mp < 1) fail("analysis.min_pairs", "must be >= 1");
            c.min_pairs = static_cast<std::size_t>(mp);
            an->finish();
        }
        sc.body = std::move(c);
        read_outputs(root, sc.outputs, {"summary_json", "curve_csv"});
    } else if (kind == "autocorr") {
        sc.kind = ExperimentKind::Autocorr;
        AutocorrConfig c;
        c.detector = detector("detector");
        Fields s(root.raw("source"), "source");
        c.source.period = period_field(s);
        c.source.mean_photons_per_pulse = s.real("mean_photons_per_pulse");
        c.source.pulse_fwhm_ps = s.real("pulse_fwhm_ps", 0.0);
        c.source.duration = s.ps("duration_ps");
        s.finish();
        checked("source", [&] { validate(c.source); });
        if (auto in = section(root, "instrument")) {
            c.periods = static_cast<int>(in->integer("periods", c.periods));
            c.bins_per_period = static_cast<int>(in->integer("bins_per_period", c.bins_per_period));
            if (in->has("min_lag_ps")) c.min_lag = in->ps("min_lag_ps");
            in->finish();
        }
        if (c.periods < 10) fail("instrument.periods", "must be >= 10");
        if (c.bins_per_period < 2) fail("instrument.bins_per_period", "must be >= 2");
        sc.body = std::move(c);
        read_outputs(root, sc.outputs, {"summary_json", "histogram_csv"});
    } else if (kind == "qkd") {
        sc.kind = ExperimentKind::Qkd;
        QkdConfig c;
        if (root.has("detector") && (root.has("detector_a") || root.has("detector_b"))) {
            fail("detector", "give either detector or detector_a/detector_b");
        }
        if (root.has("detector")) {
            c.detector_a = detector("detector");
            c.detector_b = c.detector_a;
        } else {
            c.detector_a = detector("detector_a");
            c.detector_b = detector("detector_b");
        }
        Fields s(root.raw("source"), "source");
        c.source.period = period_field(s);
        c.source.mean_pairs_per_pulse = s.real("mean_pairs_per_pulse");
        c.source.eta_alice = s.real("eta_alice", 1.0);
        c.source.eta_bob = s.real("eta_bob", 1.0);
        c.source.emission_fwhm_ps = s.real("emission_fwhm_ps", c.source.emission_fwhm_ps);
        c.duration = s.ps("duration_ps");
        s.finish();
        c.source.duration = c.duration;
        checked("source", [&] { validate(c.source); });
        if (c.duration.ps() <= 0) fail("source.duration_ps", "must be > 0");
        c.frame.bin_width = c.source.period;
        if (auto fr = section(root, "frame")) {
            const auto n = fr->integer("bins_per_frame", c.frame.bins_per_frame);
            if (n < 2 || n > (1LL << 30)) fail("frame.bins_per_frame", "must be a power of two >= 2");
            c.frame.bins_per_frame = static_cast<std::uint32_t>(n);
            fr->finish();
        }
        checked("frame", [&] { c.frame.validate(); });
        if (auto in = section(root, "instrument")) {
            c.options.xcorr_range = in->ps("xcorr_range_ps", c.options.xcorr_range);
            if (in->has("xcorr_bin_ps")) c.options.xcorr_bin = in->ps("xcorr_bin_ps");
            c.options.ac_periods = static_cast<int>(in->integer("ac_periods", c.options.ac_periods));
            c.options.ac_bins_per_period = static_cast<int>(in->integer("ac_bins_per_period", c.options.ac_bins_per_period));
            if (in->has("ac_min_lag_ps")) c.options.ac_min_lag = in->ps("ac_min_lag_ps");
            in->finish();
        }
        if (c.options.xcorr_range.ps() <= 0) fail("instrument.xcorr_range_ps", "must be > 0");
        if (c.options.xcorr_bin && c.options.xcorr_bin->ps() <= 0) fail("instrument.xcorr_bin_ps", "must be > 0");
        if (c.options.ac_periods < 10) fail("instrument.ac_periods", "must be >= 10");
        if (c.options.ac_bins_per_period < 2) fail("instrument.ac_bins_per_period", "must be >= 2");
        sc.body = std::move(c);
        read_outputs(root, sc.outputs, {"summary_json", "histogram_csv"});
    } else if (kind == "keyrate") {
        sc.kind = ExperimentKind::KeyRate;
        KeyRateConfig c;
        Fields k(root.raw("keyrate"), "keyrate");
        c.inputs.m_channels = k.real("m");
        c.inputs.eta = k.real("eta");
        c.inputs.n_mean = k.real("n_mean");
        c.inputs.xi = k.real("xi");
        c.inputs.delta_t = k.ps("bin_ps");
        k.finish();
        checked("keyrate", [&] { validate(c.inputs); });
        sc.body = c;
        read_outputs(root, sc.outputs, {"summary_json"});
    } else {
        fail("experiment", fmt::format("unknown experiment '{}' (interarrival, jitter-scan, pair-scan, twilight, autocorr, qkd, "
                                       "keyrate)",
                                       kind));
    }
    root.finish();
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config file '{}' is not valid JSON: {}", path, e.what()));
    }
    return parse_scenario(j);
}

} // namespace spadsim
