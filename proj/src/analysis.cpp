#include "spadsim/analysis.hpp"

#include <fmt/core.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace spadsim {

namespace {

double median_of(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

std::vector<double> nonzero_counts(const Histogram& h, std::size_t from, std::size_t to)
{
    std::vector<double> out;
    for (std::size_t i = from; i < std::min(to, h.size()); ++i) {
        if (h.counts[i] > 0) out.push_back(static_cast<double>(h.counts[i]));
    }
    return out;
}

} // namespace

TimePs estimate_dead_time(const Histogram& h)
{
    if (h.in_range() == 0) throw std::runtime_error("estimate_dead_time: histogram is empty");
    constexpr double kThreshold = 0.1;
    constexpr std::size_t kPlateauBins = 20;

    const double global = median_of(nonzero_counts(h, 0, h.size()));
    std::size_t rise = 0;
    while (rise < h.size() && static_cast<double>(h.counts[rise]) <= kThreshold * global) ++rise;
    if (rise == h.size()) throw std::runtime_error("estimate_dead_time: no onset found");

    const double plateau = median_of(nonzero_counts(h, rise, rise + kPlateauBins));
    std::size_t onset = 0;
    while (onset < h.size() && static_cast<double>(h.counts[onset]) <= kThreshold * plateau) ++onset;
    if (onset == h.size()) throw std::runtime_error("estimate_dead_time: no onset found");

    // A partially filled onset bin is assumed to fill from its right edge.
    const double fill = std::min(1.0, static_cast<double>(h.counts[onset]) / plateau);
    const double edge = static_cast<double>(h.bin_start(onset + 1).ps()) - fill * static_cast<double>(h.bin_width.ps());
    return round_ps(edge);
}

// ---------------------------------------------------------------------------

namespace {

struct LogLinear {
    double a = 0.0; ///< log level at x = 0
    double b = 0.0; ///< slope per ns
    bool zero = false;
};

// Poisson maximum likelihood for counts ~ exp(a + b x).
LogLinear fit_log_linear(std::span<const double> x, std::span<const double> c)
{
    LogLinear f;
    const double sum_c = std::accumulate(c.begin(), c.end(), 0.0);
    if (sum_c <= 0.0) {
        f.zero = true;
        return f;
    }
    f.a = std::log(sum_c / static_cast<double>(c.size()));
    for (int iter = 0; iter < 50; ++iter) {
        double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double mu = std::exp(f.a + f.b * x[i]);
            ga += c[i] - mu;
            gb += (c[i] - mu) * x[i];
            haa += mu;
            hab += mu * x[i];
            hbb += mu * x[i] * x[i];
        }
        const double det = haa * hbb - hab * hab;
        if (!(det > 0.0)) break;
        const double da = (hbb * ga - hab * gb) / det;
        const double db = (haa * gb - hab * ga) / det;
        f.a += std::clamp(da, -2.0, 2.0);
        f.b += std::clamp(db, -1.0, 1.0);
        if (std::abs(da) < 1e-10 && std::abs(db) < 1e-12) break;
    }
    return f;
}

struct ExcessFit {
    double amp = 0.0;
    double amp_err = 0.0;
    double chi2 = 0.0;
};

// Weighted least squares for the amplitude of exp(-(x - t0)/tau) on top of a
// fixed background, with weights refreshed from the model (approximate Poisson ML).
ExcessFit fit_excess_amplitude(std::span<const double> x_ps, std::span<const double> c, std::span<const double> bg,
                               double t0_ps, double tau_ps)
{
    std::vector<double> e(x_ps.size());
    for (std::size_t i = 0; i < x_ps.size(); ++i) e[i] = std::exp(-(x_ps[i] - t0_ps) / tau_ps);
    ExcessFit f;
    for (int iter = 0; iter < 4; ++iter) {
        double swe2 = 0.0;
        double swer = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double w = 1.0 / std::max(bg[i] + f.amp * e[i], 1.0);
            swe2 += w * e[i] * e[i];
            swer += w * e[i] * (c[i] - bg[i]);
        }
        if (!(swe2 > 0.0)) break;
        f.amp = swer / swe2;
        f.amp_err = 1.0 / std::sqrt(swe2);
    }
    f.chi2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double m = bg[i] + f.amp * e[i];
        const double r = c[i] - m;
        f.chi2 += r * r / std::max(m, 1.0);
    }
    return f;
}

} // namespace

AfterpulseResult afterpulse_spectroscopy(const Histogram& h, TimePs tau_dead, const AfterpulseOptions& opt)
{
    if (opt.expected_tau_trap.ps() <= 0) throw std::invalid_argument("afterpulse_spectroscopy: expected_tau_trap must be > 0");
    if (opt.skip_bins < 0) throw std::invalid_argument("afterpulse_spectroscopy: skip_bins must be >= 0");
    if (h.end() < tau_dead + opt.expected_tau_trap * 10) {
        throw std::runtime_error(fmt::format("afterpulse_spectroscopy: histogram ends at {} ns, need at least {} ns",
                                             h.end().ns(), (tau_dead + opt.expected_tau_trap * 10).ns()));
    }
    const double total = static_cast<double>(h.total());
    if (total < 1000.0) {
        throw std::runtime_error(fmt::format("afterpulse_spectroscopy: {} intervals, need at least 1000", h.total()));
    }
    const TimePs cut = opt.background_cut.value_or(tau_dead + opt.expected_tau_trap * 5);
    const double w = static_cast<double>(h.bin_width.ps());

    // Background from the far tail.
    std::vector<double> tail_x;
    std::vector<double> tail_c;
    const double x_ref = static_cast<double>(cut.ps());
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (h.bin_start(i) < cut) continue;
        tail_x.push_back((h.bin_center_ps(i) - x_ref) * 1e-3);
        tail_c.push_back(static_cast<double>(h.counts[i]));
    }
    if (tail_x.size() < 5) throw std::runtime_error("afterpulse_spectroscopy: fewer than 5 bins beyond the background cut");
    const LogLinear bgfit = fit_log_linear(tail_x, tail_c);
    auto background = [&](double center_ps) {
        return bgfit.zero ? 0.0 : std::exp(bgfit.a + bgfit.b * (center_ps - x_ref) * 1e-3);
    };

    // Excess region: from the first bin at or after tau_dead (plus skipped bins) up to the cut.
    std::size_t first = 0;
    while (first < h.size() && h.bin_start(first) < tau_dead) ++first;
    first += static_cast<std::size_t>(opt.skip_bins);
    std::vector<double> xs;
    std::vector<double> cs;
    std::vector<double> bg;
    for (std::size_t i = first; i < h.size() && h.bin_start(i) < cut; ++i) {
        xs.push_back(h.bin_center_ps(i));
        cs.push_back(static_cast<double>(h.counts[i]));
        bg.push_back(background(h.bin_center_ps(i)));
    }
    if (xs.size() < 5) throw std::runtime_error("afterpulse_spectroscopy: fewer than 5 bins in the excess region");
    const double t0 = static_cast<double>(tau_dead.ps());

    // Lifetime: log grid, then golden-section refinement around the best node.
    const double expected = static_cast<double>(opt.expected_tau_trap.ps());
    const double tau_lo = std::max(0.25 * w, 0.02 * expected);
    const double tau_hi = 20.0 * expected;
    constexpr int kGrid = 80;
    std::vector<double> grid(kGrid);
    std::vector<double> chi(kGrid);
    for (int k = 0; k < kGrid; ++k) {
        grid[k] = tau_lo * std::pow(tau_hi / tau_lo, static_cast<double>(k) / (kGrid - 1));
        chi[k] = fit_excess_amplitude(xs, cs, bg, t0, grid[k]).chi2;
    }
    const int best = static_cast<int>(std::min_element(chi.begin(), chi.end()) - chi.begin());
    double lo = grid[std::max(best - 1, 0)];
    double hi = grid[std::min(best + 1, kGrid - 1)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - phi * (hi - lo);
    double b = lo + phi * (hi - lo);
    double fa = fit_excess_amplitude(xs, cs, bg, t0, a).chi2;
    double fb = fit_excess_amplitude(xs, cs, bg, t0, b).chi2;
    for (int iter = 0; iter < 60 && hi - lo > 1e-3; ++iter) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = fit_excess_amplitude(xs, cs, bg, t0, a).chi2;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = fit_excess_amplitude(xs, cs, bg, t0, b).chi2;
        }
    }
    const double tau = 0.5 * (lo + hi);
    const ExcessFit fit = fit_excess_amplitude(xs, cs, bg, t0, tau);

    AfterpulseResult res;
    res.residual = xs.size() > 2 ? fit.chi2 / static_cast<double>(xs.size() - 2) : 0.0;
    res.single_lifetime_ok = res.residual < opt.residual_threshold;
    res.background_tau_ps = (!bgfit.zero && bgfit.b < 0.0) ? -1e3 / bgfit.b : 0.0;
    // Judged at the expected lifetime: testing the best of many lifetimes
    // would flag pure noise far more often than 3 sigma suggests.
    const ExcessFit at_expected = fit_excess_amplitude(xs, cs, bg, t0, expected);
    res.significant = at_expected.amp > 3.0 * at_expected.amp_err;

    if (fit.amp < -3.0 * fit.amp_err) {
        throw std::runtime_error(fmt::format("afterpulse_spectroscopy: negative excess {:.3g} +- {:.3g} counts/bin at tau {:.1f} ns "
                                             "(background level {:.3g} counts/bin)",
                                             fit.amp, fit.amp_err, tau * 1e-3, bg.front()));
    }
    if (fit.amp <= 0.0) {
        res.p_afterpulse = 0.0;
        res.p_error = fit.amp_err * expected / w / total;
        res.tau_trap = opt.expected_tau_trap;
        return res;
    }
    if (res.significant && (best == 0 || best == kGrid - 1)) {
        throw std::runtime_error(fmt::format("afterpulse_spectroscopy: lifetime fit hit its search bound ({:.2f} ns)", tau * 1e-3));
    }
    // Sum of exp(-(center - t0)/tau) over bins tiling [t0, inf).
    const double per_amp = std::exp(-0.5 * w / tau) / -std::expm1(-w / tau);
    res.p_afterpulse = std::min(1.0, fit.amp * per_amp / total);
    res.p_error = fit.amp_err * per_amp / total;
    res.tau_trap = round_ps(tau);
    return res;
}

// ---------------------------------------------------------------------------

TwilightCurve twilight_curve(std::span<const PairCounts> scan)
{
    TwilightCurve out;
    for (const auto& pt : scan) {
        if (pt.pairs == 0 || pt.first_detected == 0) {
            out.missing.push_back(pt.delta_t);
            continue;
        }
        const double n1 = static_cast<double>(pt.first_detected);
        const double q = static_cast<double>(pt.both_detected) / n1;
        const double f = n1 / static_cast<double>(pt.pairs);
        const double sq = std::sqrt(std::max(q * (1.0 - q), 0.0) / n1);
        const double sf = std::sqrt(std::max(f * (1.0 - f), 0.0) / static_cast<double>(pt.pairs));
        const double y = q / f;
        const double err = std::hypot(sq / f, q * sf / (f * f));
        out.points.push_back({static_cast<double>(pt.delta_t.ps()), y, err});
    }
    return out;
}

TimePs twilight_window(const TwilightCurve& curve)
{
    auto pts = curve.points;
    if (pts.empty()) throw std::runtime_error("twilight_window: empty curve");
    std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });
    auto crossing = [&](std::size_t i, double level) {
        if (i == 0) return pts[0].x;
        const auto& p = pts[i - 1];
        const auto& q = pts[i];
        if (q.y == p.y) return q.x;
        return p.x + (level - p.y) * (q.x - p.x) / (q.y - p.y);
    };
    std::size_t i90 = 0;
    while (i90 < pts.size() && pts[i90].y < 0.9) ++i90;
    if (i90 == pts.size()) throw std::runtime_error("twilight_window: curve never reaches 90%");
    const double x90 = crossing(i90, 0.9);
    // Last point below 10% before the 90% crossing.
    std::size_t i10 = 0;
    bool found = false;
    for (std::size_t j = 0; j < i90; ++j) {
        if (pts[j].y < 0.1) {
            i10 = j + 1;
            found = true;
        }
    }
    const double x10 = found ? crossing(i10, 0.1) : pts[0].x;
    return round_ps(std::max(0.0, x90 - x10));
}

ShiftJitterCurve shift_and_jitter_vs_dt(std::span<const PairIntervals> scan, std::size_t min_pairs, TimePs bin_width)
{
    if (bin_width.ps() <= 0) throw std::invalid_argument("shift_and_jitter_vs_dt: bin_width must be > 0");
    ShiftJitterCurve out;
    for (const auto& pt : scan) {
        if (pt.intervals.size() < std::max<std::size_t>(min_pairs, 1)) {
            out.missing.push_back(pt.delta_t);
            continue;
        }
        std::vector<TimePs> dev;
        dev.reserve(pt.intervals.size());
        double sum = 0.0;
        for (const TimePs v : pt.intervals) {
            dev.push_back(v - pt.delta_t);
            sum += static_cast<double>((v - pt.delta_t).ps());
        }
        ShiftJitterPoint p;
        p.delta_t = pt.delta_t;
        p.n = dev.size();
        p.shift_ps = sum / static_cast<double>(dev.size());
        const auto [mn, mx] = std::minmax_element(dev.begin(), dev.end());
        if (*mn == *mx) {
            p.fwhm_ps = 0.0;
            out.points.push_back(p);
            continue;
        }
        const TimePs center = round_ps(p.shift_ps);
        const TimePs half_range{5'000};
        const Histogram h = build_histogram(dev, bin_width, half_range * 2, center - half_range);
        try {
            p.fwhm_ps = gaussian_fit(h).fwhm_ps;
        } catch (const std::runtime_error&) {
            out.missing.push_back(pt.delta_t);
            continue;
        }
        out.points.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------

Visibility distinguishability(const Histogram& ac, TimePs period, TimePs min_lag)
{
    if (period < ac.bin_width * 2) {
        throw std::invalid_argument(fmt::format("distinguishability: period {} ps is shorter than two {} ps bins", period.ps(),
                                                ac.bin_width.ps()));
    }
    auto bin_of = [&](double t_ps) -> std::optional<std::size_t> {
        const double rel = (t_ps - static_cast<double>(ac.origin.ps())) / static_cast<double>(ac.bin_width.ps());
        if (rel < 0.0) return std::nullopt;
        const auto i = static_cast<std::size_t>(rel);
        if (i >= ac.size()) return std::nullopt;
        return i;
    };
    const double T = static_cast<double>(period.ps());
    const double lag0 = static_cast<double>(min_lag.ps());
    double peak_sum = 0.0;
    double valley_sum = 0.0;
    std::size_t n = 0;
    for (auto m = static_cast<std::int64_t>(std::floor(lag0 / T)) + 1;; ++m) {
        const double tp = static_cast<double>(m) * T;
        const double tv = tp + 0.5 * T;
        const auto ip = bin_of(tp);
        const auto iv = bin_of(tv);
        if (!ip || !iv) break;
        peak_sum += static_cast<double>(ac.counts[*ip]);
        valley_sum += static_cast<double>(ac.counts[*iv]);
        ++n;
    }
    if (n == 0) throw std::runtime_error("distinguishability: no complete period above min_lag inside the histogram");
    if (peak_sum + valley_sum <= 0.0) throw std::runtime_error("distinguishability: histogram is empty above min_lag");
    const double tot = peak_sum + valley_sum;
    Visibility v;
    v.value = std::clamp((peak_sum - valley_sum) / tot, 0.0, 1.0);
    v.error = 2.0 * std::sqrt(peak_sum * valley_sum / (tot * tot * tot));
    return v;
}

PeakExcess dead_time_peak(const Histogram& xc, TimePs tau_dead)
{
    const double td = static_cast<double>(tau_dead.ps());
    const double c_lo = td;
    const double c_hi = td + 2000.0;
    const double b_lo = td + 3000.0;
    const double b_hi = std::min(1.75 * td, td + 30000.0);
    std::vector<double> cx;
    std::vector<double> bx;
    std::vector<double> by;
    PeakExcess out;
    for (std::size_t i = 0; i < xc.size(); ++i) {
        const double x = xc.bin_center_ps(i);
        if (x >= c_lo && x < c_hi) {
            cx.push_back(x);
            out.cluster += static_cast<double>(xc.counts[i]);
        } else if (x >= b_lo && x < b_hi) {
            bx.push_back(x);
            by.push_back(static_cast<double>(xc.counts[i]));
        }
    }
    if (cx.empty() || bx.size() < 4) {
        throw std::runtime_error(fmt::format("dead_time_peak: {} cluster and {} baseline bins around {} ns", cx.size(), bx.size(),
                                             tau_dead.ns()));
    }
    // Log-linear baseline: the first-renewal density after a dead period
    // falls off exponentially, and so does the afterpulse tail. Weighted least
    // squares on ln(counts) with Poisson weights.
    double sw = 0.0;
    double swx = 0.0;
    for (std::size_t i = 0; i < bx.size(); ++i) {
        sw += std::max(by[i], 1.0);
        swx += std::max(by[i], 1.0) * bx[i];
    }
    const double mx = swx / sw;
    double sxx = 0.0;
    double sy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < bx.size(); ++i) {
        const double w = std::max(by[i], 1.0);
        const double ly = std::log(std::max(by[i], 0.5));
        sxx += w * (bx[i] - mx) * (bx[i] - mx);
        sy += w * ly;
        sxy += w * (bx[i] - mx) * ly;
    }
    const double a = sy / sw;
    const double b = sxx > 0.0 ? sxy / sxx : 0.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < bx.size(); ++i) {
        const double m = std::exp(a + b * (bx[i] - mx));
        chi2 += (by[i] - m) * (by[i] - m) / m;
    }
    const double n = static_cast<double>(bx.size());
    const double scale = std::max(1.0, chi2 / (n - 2.0));
    // d(sum)/da = sum m_i, d(sum)/db = sum m_i (x_i - mx); a and b are uncorrelated by construction.
    double ga = 0.0;
    double gb = 0.0;
    for (const double x : cx) {
        const double m = std::exp(a + b * (x - mx));
        out.expected += m;
        ga += m;
        gb += m * (x - mx);
    }
    const double var_fit = scale * (ga * ga / sw + (sxx > 0.0 ? gb * gb / sxx : 0.0));
    const double var = std::max(out.expected, 1.0) + var_fit;
    out.z = (out.cluster - out.expected) / std::sqrt(var);
    return out;
}

double heralding_efficiency(std::uint64_t coincidences, std::uint64_t singles_a, std::uint64_t singles_b)
{
    const auto denom = singles_a + singles_b;
    if (denom == 0) throw std::invalid_argument("heralding_efficiency: no singles");
    return static_cast<double>(coincidences) / static_cast<double>(denom);
}

void validate(const KeyRateInputs& k)
{
    if (!(k.m_channels >= 0.0) || !std::isfinite(k.m_channels)) throw std::invalid_argument("key rate: m must be >= 0");
    if (!(k.eta >= 0.0 && k.eta <= 1.0)) throw std::invalid_argument("key rate: eta must be in [0, 1]");
    if (!(k.n_mean >= 0.0) || !std::isfinite(k.n_mean)) throw std::invalid_argument("key rate: n_mean must be >= 0");
    if (!(k.xi >= 0.0) || !std::isfinite(k.xi)) throw std::invalid_argument("key rate: xi must be >= 0");
    if (k.delta_t.ps() <= 0) throw std::invalid_argument("key rate: bin width must be > 0");
}

double secret_key_rate(const KeyRateInputs& k)
{
    validate(k);
    return k.m_channels * k.eta * k.eta * k.n_mean * k.xi / k.delta_t.seconds();
}

void write_curve_csv(std::ostream& os, std::span<const CurvePoint> pts, std::string_view x_name, std::string_view y_name,
                     bool with_err)
{
    fmt::print(os, "{},{}{}\n", x_name, y_name, with_err ? ",err" : "");
    for (const auto& p : pts) {
        if (with_err) {
            fmt::print(os, "{},{},{}\n", p.x, p.y, p.err);
        } else {
            fmt::print(os, "{},{}\n", p.x, p.y);
        }
    }
}

} // namespace spadsim
