#include "spadsim/presets.hpp"
#include "spadsim/qkd.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace spadsim;
using namespace spadsim::literals;

namespace {

DetectorParams ideal_detector()
{
    DetectorParams p;
    p.efficiency = 1.0;
    p.tau_dead0 = 0_ps;
    p.tau_quench = 0_ps;
    p.base_delay = 0_ps;
    return p;
}

DetectorParams simple_detector(TimePs dead, double jitter_fwhm)
{
    DetectorParams p;
    p.efficiency = 0.5;
    p.tau_dead0 = dead;
    p.tau_quench = dead;
    p.base_delay = 10_ns;
    if (jitter_fwhm > 0.0) p.jitter_curve = PiecewiseLinear::constant(jitter_fwhm);
    return p;
}

EntangledPairConfig source_at(TimePs period, double mu, double eta)
{
    EntangledPairConfig c;
    c.period = period;
    c.mean_pairs_per_pulse = mu;
    c.eta_alice = eta;
    c.eta_bob = eta;
    c.emission_fwhm_ps = 5.0;
    return c;
}

void check_report_invariants(const QkdReport& r)
{
    CHECK(r.raw_key_rate == doctest::Approx(r.coincidence_rate * std::log2(static_cast<double>(r.bins_per_frame))));
    CHECK(r.timing_ber >= 0.0);
    CHECK(r.timing_ber <= 1.0);
    CHECK(r.lab_ber >= 0.0);
    CHECK(r.lab_ber <= 1.0);
    CHECK(r.coincidences <= std::min(r.singles_a, r.singles_b));
    CHECK(r.heralding <= 0.5);
    CHECK(r.true_coincidences <= r.coincidences);
}

} // namespace

TEST_CASE("bin_assign examples")
{
    const FrameConfig f{260_ps, 1024};
    CHECK(bin_assign(0_ps, f) == BinIndex{0, 0});
    CHECK(bin_assign(266.24_ns, f) == BinIndex{1, 0});
    CHECK(bin_assign(259_ps, f) == BinIndex{0, 0});
    CHECK(bin_assign(261_ps, f) == BinIndex{0, 1});
    CHECK(bin_assign(266.24_ns - 1_ps, f) == BinIndex{0, 1023});
    CHECK(f.rep_rate() == doctest::Approx(3.846e9).epsilon(1e-3));
    CHECK_THROWS_AS(bin_assign(TimePs{-1}, f), std::invalid_argument);
    CHECK_THROWS_AS((FrameConfig{260_ps, 1000}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((FrameConfig{0_ps, 1024}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((FrameConfig{260_ps, 1}.validate()), std::invalid_argument);
}

TEST_CASE("property: bin_assign reconstructs the time to within one bin")
{
    RngStream rng(1, 0);
    for (int i = 0; i < 10'000; ++i) {
        const FrameConfig f{TimePs{1 + static_cast<std::int64_t>(rng.uniform() * 5000)}, 1u << (1 + rng.engine()() % 12)};
        const TimePs t{static_cast<std::int64_t>(rng.uniform() * 1e12)};
        const auto b = bin_assign(t, f);
        REQUIRE(b.bin < f.bins_per_frame);
        const std::int64_t start = (static_cast<std::int64_t>(b.frame) * f.bins_per_frame + b.bin) * f.bin_width.ps();
        REQUIRE(t.ps() >= start);
        REQUIRE(t.ps() < start + f.bin_width.ps());
    }
}

TEST_CASE("raw_key_rate")
{
    CHECK(raw_key_rate(1000.0, 1024) == doctest::Approx(10'000.0));
    CHECK(raw_key_rate(0.0, 1024) == 0.0);
    CHECK(raw_key_rate(123.0, 2) == doctest::Approx(123.0));
    CHECK_THROWS_AS(raw_key_rate(1.0, 1), std::invalid_argument);
    for (unsigned k = 1; k < 20; ++k) CHECK(raw_key_rate(500.0, 1ull << k) == doctest::Approx(500.0 * k));
}

TEST_CASE("lossless limit: ideal detectors give no errors and heralding 1/2")
{
    RngStream rng(2, 0);
    const auto r = run_qkd_scenario(source_at(521_ps, 0.01, 1.0), ideal_detector(), ideal_detector(), {521_ps, 1024}, 5_ms, rng);
    CHECK(r.coincidences > 50'000);
    CHECK(r.timing_ber == 0.0);
    CHECK(r.lab_ber == 0.0);
    CHECK(r.heralding == doctest::Approx(0.5));
    CHECK(r.singles_a == r.singles_b);
    check_report_invariants(r);
}

TEST_CASE("property: timing errors grow with detector jitter")
{
    std::vector<double> ber;
    for (const double fwhm : {0.0, 150.0, 300.0, 600.0}) {
        RngStream rng(3, 0);
        const auto d = simple_detector(20_ns, fwhm);
        const auto r = run_qkd_scenario(source_at(521_ps, 0.01, 0.5), d, d, {521_ps, 1024}, 20_ms, rng);
        check_report_invariants(r);
        ber.push_back(r.timing_ber);
    }
    MESSAGE("BER vs jitter: " << ber[0] << " " << ber[1] << " " << ber[2] << " " << ber[3]);
    for (std::size_t i = 1; i < ber.size(); ++i) CHECK(ber[i] >= ber[i - 1]);
    CHECK(ber.back() > 0.1);
}

TEST_CASE("property: heralding falls with dead time at fixed flux")
{
    std::vector<double> her;
    for (const TimePs dead : {20_ns, 40_ns, 80_ns, 160_ns}) {
        RngStream rng(4, 0);
        const auto d = simple_detector(dead, 0.0);
        const auto r = run_qkd_scenario(source_at(521_ps, 0.05, 0.5), d, d, {521_ps, 1024}, 10_ms, rng);
        check_report_invariants(r);
        her.push_back(r.heralding);
    }
    MESSAGE("heralding vs dead time: " << her[0] << " " << her[1] << " " << her[2] << " " << her[3]);
    for (std::size_t i = 1; i < her.size(); ++i) CHECK(her[i] <= her[i - 1]);
    CHECK(her.back() < her.front());
}

TEST_CASE("property: disabling twilight lowers the timing error rate at high flux")
{
    DetectorParams d = preset("spcm-aqrh").params;
    d.jitter_curve = {};
    d.rate_jitter = {};
    d.shift_curve = {};
    d.rate_shift = {};
    d.afterpulse.mu = 0.0;
    d.dark_rate = 0.0;
    DetectorParams off = d;
    off.twilight_enabled = false;
    const auto src = source_at(521_ps, 0.05, 0.5);
    RngStream r1(5, 0);
    RngStream r2(5, 0);
    const auto on_r = run_qkd_scenario(src, d, d, {521_ps, 1024}, 10_ms, r1);
    const auto off_r = run_qkd_scenario(src, off, off, {521_ps, 1024}, 10_ms, r2);
    MESSAGE("BER twilight on " << on_r.timing_ber << ", off " << off_r.timing_ber);
    CHECK(off_r.timing_ber < on_r.timing_ber);
    check_report_invariants(on_r);
    check_report_invariants(off_r);
}

TEST_CASE("scenario checks and reproducibility")
{
    const auto d = preset("custom-aq").params;
    RngStream rng(6, 0);
    CHECK_THROWS_AS(run_qkd_scenario(source_at(521_ps, 0.01, 0.5), d, d, {260_ps, 1024}, 1_ms, rng), std::invalid_argument);
    CHECK_THROWS_AS(run_qkd_scenario(source_at(521_ps, 0.01, 0.5), d, d, {521_ps, 1024}, 0_ps, rng), std::invalid_argument);

    RngStream a(7, 0);
    RngStream b(7, 0);
    const auto ra = run_qkd_scenario(source_at(521_ps, 0.01, 0.5), d, d, {521_ps, 1024}, 2_ms, a);
    const auto rb = run_qkd_scenario(source_at(521_ps, 0.01, 0.5), d, d, {521_ps, 1024}, 2_ms, b);
    CHECK(ra.coincidences == rb.coincidences);
    CHECK(ra.timing_ber == rb.timing_ber);
    CHECK(ra.xcorr.counts == rb.xcorr.counts);
    CHECK(ra.distinguishability_a.value == rb.distinguishability_a.value);
}

TEST_CASE("blind period")
{
    CHECK(blind_period(preset("custom-aq").params) == 24_ns);
    CHECK(blind_period(preset("spcm-aqrh").params) == 29.1_ns);
    CHECK(blind_period(preset("spd-050-ttl").params) == 78_ns);
}
