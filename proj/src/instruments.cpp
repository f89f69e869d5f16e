#include "spadsim/instruments.hpp"

#include <fmt/core.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace spadsim {

Histogram::Histogram(TimePs bin_width_, TimePs origin_, std::size_t n_bins)
    : bin_width(bin_width_), origin(origin_), counts(n_bins, 0)
{
    if (bin_width.ps() <= 0) throw std::invalid_argument("histogram: bin_width must be > 0");
}

void Histogram::add(TimePs v)
{
    if (v < origin) {
        ++underflow;
        return;
    }
    const auto idx = static_cast<std::uint64_t>((v - origin).ps() / bin_width.ps());
    if (idx >= counts.size()) {
        ++overflow;
        return;
    }
    ++counts[idx];
}

std::uint64_t Histogram::in_range() const
{
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

void Histogram::write_csv(std::ostream& os) const
{
    os << "bin_start_ps,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        fmt::print(os, "{},{}\n", bin_start(i).ps(), counts[i]);
    }
    fmt::print(os, "#underflow={},#overflow={}\n", underflow, overflow);
}

Histogram build_histogram(std::span<const TimePs> values, TimePs bin_width, TimePs range, TimePs origin)
{
    if (bin_width.ps() <= 0) throw std::invalid_argument("build_histogram: bin_width must be > 0");
    if (range.ps() <= 0) throw std::invalid_argument("build_histogram: range must be > 0");
    const auto n = static_cast<std::size_t>((range.ps() + bin_width.ps() - 1) / bin_width.ps());
    Histogram h(bin_width, origin, n);
    for (const TimePs v : values) h.add(v);
    return h;
}

// ---------------------------------------------------------------------------

std::vector<TimePs> tac_measure(std::span<const TimePs> starts, std::span<const TimePs> stops, const TacConfig& cfg,
                                RngStream& rng)
{
    if (cfg.range.ps() <= 0) throw std::invalid_argument("tac: range must be > 0");
    if (!(cfg.instrument_fwhm_ps >= 0.0)) throw std::invalid_argument("tac: instrument_fwhm must be >= 0");
    std::vector<TimePs> out;
    std::size_t j = 0;
    bool busy = false;
    TimePs last_start;
    for (const TimePs s : starts) {
        if (busy && s - last_start < cfg.range) continue;
        busy = true;
        last_start = s;
        while (j < stops.size() && stops[j] <= s) ++j;
        if (j == stops.size()) continue;
        const TimePs interval = stops[j] - s;
        if (interval < cfg.range) out.push_back(sample_gaussian_fwhm(rng, interval, cfg.instrument_fwhm_ps));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<TimePs> CoincidenceResult::times() const
{
    std::vector<TimePs> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.time);
    return out;
}

CoincidenceResult coincidence(std::span<const TimePs> a, std::span<const TimePs> b, TimePs window, TimePs out_width)
{
    if (window.ps() <= 0) throw std::invalid_argument("coincidence: window must be > 0");
    CoincidenceResult res;
    res.out_width = out_width;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() && j < b.size()) {
        const TimePs d = a[i] - b[j];
        if (d < window && -d < window) {
            res.pairs.push_back({std::max(a[i], b[j]), i, j});
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

namespace {

// Solves the 3x3 system m x = r by Gaussian elimination with partial pivoting.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> r, std::array<double, 3>& x)
{
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int k = c + 1; k < 3; ++k) {
            if (std::abs(m[k][c]) > std::abs(m[piv][c])) piv = k;
        }
        if (std::abs(m[piv][c]) < 1e-300) return false;
        std::swap(m[c], m[piv]);
        std::swap(r[c], r[piv]);
        for (int k = c + 1; k < 3; ++k) {
            const double f = m[k][c] / m[c][c];
            for (int l = c; l < 3; ++l) m[k][l] -= f * m[c][l];
            r[k] -= f * r[c];
        }
    }
    for (int c = 2; c >= 0; --c) {
        double s = r[c];
        for (int l = c + 1; l < 3; ++l) s -= m[c][l] * x[l];
        x[c] = s / m[c][c];
    }
    return true;
}

} // namespace

GaussianFit gaussian_fit(const Histogram& h)
{
    if (h.counts.empty()) throw std::runtime_error("gaussian_fit: empty histogram");
    const auto mode_it = std::max_element(h.counts.begin(), h.counts.end());
    const auto mode = static_cast<std::size_t>(mode_it - h.counts.begin());
    const double peak_count = static_cast<double>(*mode_it);
    if (peak_count <= 0.0) throw std::runtime_error("gaussian_fit: histogram has no counts");

    std::size_t nz_lo = mode;
    std::size_t nz_hi = mode;
    while (nz_lo > 0 && h.counts[nz_lo - 1] > 0) --nz_lo;
    while (nz_hi + 1 < h.size() && h.counts[nz_hi + 1] > 0) ++nz_hi;
    if (nz_hi - nz_lo + 1 < 5) {
        throw std::runtime_error(fmt::format("gaussian_fit: only {} populated bins around the mode (need 5)", nz_hi - nz_lo + 1));
    }

    const double half = 0.5 * peak_count;
    std::size_t lo = mode;
    std::size_t hi = mode;
    while (lo > 0 && static_cast<double>(h.counts[lo - 1]) >= half) --lo;
    while (hi + 1 < h.size() && static_cast<double>(h.counts[hi + 1]) >= half) ++hi;
    if (hi - lo + 1 < 3) {
        throw std::runtime_error(fmt::format("gaussian_fit: half-maximum window has {} bins (need 3)", hi - lo + 1));
    }

    // Work in units of bins relative to the mode for conditioning.
    const double x0 = h.bin_center_ps(mode);
    const double w = static_cast<double>(h.bin_width.ps());
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = lo; i <= hi; ++i) {
        xs.push_back((h.bin_center_ps(i) - x0) / w);
        ys.push_back(static_cast<double>(h.counts[i]));
    }

    // Log-parabola with weights ~ counts (var(ln c) ~ 1/c).
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> r{};
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double wt = ys[k];
        const std::array<double, 3> phi{1.0, xs[k], xs[k] * xs[k]};
        const double ly = std::log(ys[k]);
        for (int a = 0; a < 3; ++a) {
            r[a] += wt * phi[a] * ly;
            for (int b = 0; b < 3; ++b) m[a][b] += wt * phi[a] * phi[b];
        }
    }
    std::array<double, 3> coef{};
    if (!solve3(m, r, coef) || !(coef[2] < 0.0)) throw std::runtime_error("gaussian_fit: window is not peaked");
    double sigma = std::sqrt(-1.0 / (2.0 * coef[2]));
    double mu = -coef[1] / (2.0 * coef[2]);
    double amp = std::exp(coef[0] - coef[1] * coef[1] / (4.0 * coef[2]));
    // A nearly flat window gives a useless parabola; fall back to the window itself.
    const double width_sigma = static_cast<double>(hi - lo + 1) / kFwhmPerSigma;
    if (!(sigma > 0.25 * width_sigma && sigma < 2.0 * width_sigma) || std::abs(mu) > static_cast<double>(hi - lo + 1)) {
        sigma = width_sigma;
        mu = 0.5 * (xs.front() + xs.back());
        amp = peak_count;
    }

    // Poisson likelihood refinement (Fisher scoring) over a window re-chosen
    // from the model as +-2 sigma on every pass, so the fit region does not
    // depend on which bins happened to fluctuate above half maximum.
    auto refine = [&](const std::vector<double>& fx, const std::vector<double>& fy) {
        for (int iter = 0; iter < 30; ++iter) {
            std::array<std::array<double, 3>, 3> jtj{};
            std::array<double, 3> jtr{};
            for (std::size_t k = 0; k < fx.size(); ++k) {
                const double d = fx[k] - mu;
                const double e = std::exp(-d * d / (2.0 * sigma * sigma));
                const double model = amp * e;
                const std::array<double, 3> g{e, amp * e * d / (sigma * sigma), amp * e * d * d / (sigma * sigma * sigma)};
                const double wt = 1.0 / std::max(model, 1e-3);
                for (int a = 0; a < 3; ++a) {
                    jtr[a] += wt * g[a] * (fy[k] - model);
                    for (int b = 0; b < 3; ++b) jtj[a][b] += wt * g[a] * g[b];
                }
            }
            std::array<double, 3> step{};
            if (!solve3(jtj, jtr, step)) break;
            // Trust region: noisy starts can overshoot, so no step moves the
            // center by more than one sigma or changes sigma or amp by more than half.
            double scale = 1.0;
            scale = std::min(scale, sigma / std::max(std::abs(step[1]), 1e-300));
            scale = std::min(scale, 0.5 * sigma / std::max(std::abs(step[2]), 1e-300));
            scale = std::min(scale, 0.5 * amp / std::max(std::abs(step[0]), 1e-300));
            for (double& v : step) v *= scale;
            amp += step[0];
            mu += step[1];
            sigma += step[2];
            if (std::abs(step[1]) < 1e-9 && std::abs(step[2]) < 1e-9 * sigma) break;
        }
    };
    for (int pass = 0; pass < 4; ++pass) {
        const double c = x0 / w + mu;
        const double reach = std::max(2.0 * sigma, 1.5);
        std::vector<double> fx;
        std::vector<double> fy;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double xi = h.bin_center_ps(i) / w;
            if (std::abs(xi - c) > reach) continue;
            fx.push_back(xi - x0 / w);
            fy.push_back(static_cast<double>(h.counts[i]));
        }
        if (fx.size() < 3) break;
        xs = std::move(fx);
        ys = std::move(fy);
        refine(xs, ys);
    }

    double chi2 = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double d = xs[k] - mu;
        const double model = amp * std::exp(-d * d / (2.0 * sigma * sigma));
        chi2 += (ys[k] - model) * (ys[k] - model) / std::max(model, 1e-3);
    }

    GaussianFit fit;
    fit.peak_ps = x0 + mu * w;
    fit.fwhm_ps = kFwhmPerSigma * sigma * w;
    fit.amplitude = amp;
    fit.residual = xs.size() > 3 ? chi2 / static_cast<double>(xs.size() - 3) : 0.0;
    fit.window_bins = xs.size();
    return fit;
}

// ---------------------------------------------------------------------------

Histogram autocorrelation(std::span<const TimePs> pulses, TimePs max_lag, TimePs bin_width, TimePs origin)
{
    if (!(max_lag > origin)) throw std::invalid_argument("autocorrelation: max_lag must exceed origin");
    Histogram h = build_histogram({}, bin_width, max_lag - origin, origin);
    for (std::size_t i = 0; i < pulses.size(); ++i) {
        for (std::size_t j = i + 1; j < pulses.size(); ++j) {
            const TimePs d = pulses[j] - pulses[i];
            if (d >= max_lag) break;
            h.add(d);
        }
    }
    return h;
}

Histogram cross_correlation(std::span<const TimePs> a, std::span<const TimePs> b, TimePs min_lag, TimePs max_lag,
                            TimePs bin_width)
{
    if (!(max_lag > min_lag)) throw std::invalid_argument("cross_correlation: max_lag must exceed min_lag");
    Histogram h = build_histogram({}, bin_width, max_lag - min_lag, min_lag);
    std::size_t first = 0;
    for (const TimePs ta : a) {
        while (first < b.size() && b[first] - ta < min_lag) ++first;
        for (std::size_t j = first; j < b.size(); ++j) {
            const TimePs d = b[j] - ta;
            if (d >= max_lag) break;
            h.add(d);
        }
    }
    return h;
}

} // namespace spadsim
