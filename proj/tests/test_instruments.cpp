#include "spadsim/instruments.hpp"
#include "spadsim/sources.hpp"

#include "stats_oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace spadsim;
using namespace spadsim::literals;

namespace {

Histogram gaussian_histogram(RngStream& rng, std::size_t n, TimePs center, double fwhm, TimePs bin, TimePs range)
{
    std::vector<TimePs> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.push_back(sample_gaussian_fwhm(rng, center, fwhm));
    return build_histogram(v, bin, range);
}

std::uint64_t sum_counts(const Histogram& h) { return std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}); }

} // namespace

TEST_CASE("build_histogram examples")
{
    const auto empty = build_histogram(std::vector<TimePs>{}, 1_ns, 10_ns);
    CHECK(empty.size() == 10);
    CHECK(empty.total() == 0);

    const auto h = build_histogram(std::vector<TimePs>{0.5_ns, 1.5_ns}, 1_ns, 5_ns);
    CHECK(h.counts == std::vector<std::uint64_t>{1, 1, 0, 0, 0});

    const auto edges = build_histogram(std::vector<TimePs>{TimePs{-1}, 0_ps, 999_ps, 1_ns, 5_ns, 6_ns}, 1_ns, 5_ns);
    CHECK(edges.underflow == 1);
    CHECK(edges.overflow == 2);
    CHECK(edges.counts[0] == 2);
    CHECK(edges.counts[1] == 1);

    // Partial last bin: range 2.5 ns with 1 ns bins has three bins.
    CHECK(build_histogram(std::vector<TimePs>{}, 1_ns, 2.5_ns).size() == 3);
    CHECK_THROWS_AS(build_histogram(std::vector<TimePs>{}, 0_ps, 1_ns), std::invalid_argument);
    CHECK_THROWS_AS(build_histogram(std::vector<TimePs>{}, 1_ns, 0_ps), std::invalid_argument);

    std::ostringstream os;
    build_histogram(std::vector<TimePs>{1_ns, 20_ns}, 1_ns, 3_ns).write_csv(os);
    CHECK(os.str() == "bin_start_ps,count\n0,0\n1000,1\n2000,0\n#underflow=0,#overflow=1\n");
}

TEST_CASE("histogram of 61638 intervals keeps every count")
{
    RngStream rng(1, 0);
    std::vector<TimePs> v;
    for (int i = 0; i < 61'638; ++i) v.push_back(TimePs{static_cast<std::int64_t>(rng.uniform() * 700'000) - 50'000});
    const auto h = build_histogram(v, 1_ns, 550_ns);
    CHECK(h.total() == 61'638);
    CHECK(sum_counts(h) + h.underflow + h.overflow == 61'638);
}

TEST_CASE("property: histogram totals are conserved")
{
    RngStream rng(2, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform() * 5000);
        std::vector<TimePs> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(TimePs{static_cast<std::int64_t>((rng.uniform() - 0.2) * 1e6)});
        const TimePs bin{1 + static_cast<std::int64_t>(rng.uniform() * 5000)};
        const TimePs range{1 + static_cast<std::int64_t>(rng.uniform() * 1e6)};
        const TimePs origin{static_cast<std::int64_t>((rng.uniform() - 0.5) * 1e5)};
        const auto h = build_histogram(v, bin, range, origin);
        REQUIRE(h.total() == n);
        for (std::size_t i = 0; i < v.size(); i += 97) {
            if (v[i] < origin || v[i] >= h.end()) continue;
            const auto k = static_cast<std::size_t>((v[i] - origin).ps() / bin.ps());
            REQUIRE(h.counts[k] > 0);
        }
    }
}

TEST_CASE("tac_measure examples")
{
    RngStream rng(3, 0);
    const TacConfig ideal{100_ns, 0.0};
    CHECK(tac_measure(std::vector<TimePs>{0_ps}, std::vector<TimePs>{10_ns}, ideal, rng) == std::vector<TimePs>{10_ns});
    CHECK(tac_measure(std::vector<TimePs>{0_ps}, std::vector<TimePs>{200_ns}, ideal, rng).empty());
    CHECK(tac_measure(std::vector<TimePs>{0_ps}, std::vector<TimePs>{}, ideal, rng).empty());
    // A stop at the start instant is not "after" it.
    CHECK(tac_measure(std::vector<TimePs>{5_ns}, std::vector<TimePs>{5_ns, 8_ns}, ideal, rng) == std::vector<TimePs>{3_ns});
    // The second start falls inside the first conversion and is ignored.
    CHECK(tac_measure(std::vector<TimePs>{0_ps, 50_ns, 150_ns}, std::vector<TimePs>{10_ns, 60_ns, 160_ns}, ideal, rng) ==
          std::vector<TimePs>{10_ns, 10_ns});
}

TEST_CASE("tac_measure instrument jitter of 17.7 ps FWHM")
{
    RngStream rng(4, 0);
    std::vector<TimePs> starts;
    std::vector<TimePs> stops;
    for (std::int64_t k = 0; k < 200'000; ++k) {
        starts.push_back(1_us * k);
        stops.push_back(1_us * k + 10_ns);
    }
    const auto iv = tac_measure(starts, stops, {100_ns, 17.7}, rng);
    REQUIRE(iv.size() == starts.size());
    std::vector<double> x;
    for (const auto t : iv) x.push_back(static_cast<double>(t.ps()));
    CHECK(oracle::mean(x) == doctest::Approx(10'000.0).epsilon(1e-4));
    const double expect = std::sqrt(std::pow(oracle::sigma_from_fwhm(17.7), 2) + 1.0 / 12.0);
    CHECK(std::abs(oracle::stddev(x) - expect) < 0.1);
    CHECK(oracle::sigma_from_fwhm(17.7) == doctest::Approx(7.52).epsilon(2e-3));
}

TEST_CASE("property: ideal tac is reproducible and order-only")
{
    RngStream src(5, 0);
    const auto starts = cw_poisson_stream({2e6, 5_ms}, src);
    const auto stops = cw_poisson_stream({3e6, 5_ms}, src);
    RngStream a(1, 1);
    RngStream b(99, 2);
    const auto x = tac_measure(starts, stops, {550_ns, 0.0}, a);
    CHECK(x == tac_measure(starts, stops, {550_ns, 0.0}, b));
    CHECK(!x.empty());
    CHECK(std::all_of(x.begin(), x.end(), [](TimePs t) { return t > 0_ps && t < 550_ns; }));
}

TEST_CASE("coincidence examples")
{
    const auto one = coincidence(std::vector<TimePs>{0_ps}, std::vector<TimePs>{3_ns}, 5_ns, 10_ns);
    REQUIRE(one.pairs.size() == 1);
    CHECK(one.pairs[0].time == 3_ns);
    CHECK(one.out_width == 10_ns);
    CHECK(coincidence(std::vector<TimePs>{0_ps}, std::vector<TimePs>{6_ns}, 5_ns, 10_ns).pairs.empty());
    CHECK(coincidence(std::vector<TimePs>{0_ps}, std::vector<TimePs>{5_ns}, 5_ns, 10_ns).pairs.empty());
    const auto greedy = coincidence(std::vector<TimePs>{0_ps, 1_ns}, std::vector<TimePs>{0.5_ns}, 5_ns, 10_ns);
    REQUIRE(greedy.pairs.size() == 1);
    CHECK(greedy.pairs[0].a == 0);
    CHECK(greedy.pairs[0].b == 0);
    CHECK(coincidence(std::vector<TimePs>{}, std::vector<TimePs>{1_ns}, 5_ns, 10_ns).pairs.empty());
}

TEST_CASE("property: coincidence pulses are used at most once and lie within the window")
{
    RngStream rng(6, 0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = cw_poisson_stream({rng.uniform() * 5e8, 20_us}, rng);
        const auto b = cw_poisson_stream({rng.uniform() * 5e8, 20_us}, rng);
        const auto c = coincidence(a, b, 5_ns, 10_ns);
        std::vector<bool> used_a(a.size());
        std::vector<bool> used_b(b.size());
        for (const auto& p : c.pairs) {
            REQUIRE(!used_a[p.a]);
            REQUIRE(!used_b[p.b]);
            used_a[p.a] = used_b[p.b] = true;
            REQUIRE(std::abs((a[p.a] - b[p.b]).ps()) < 5'000);
            REQUIRE(p.time == std::max(a[p.a], b[p.b]));
        }
        CHECK(c.pairs.size() <= std::min(a.size(), b.size()));
    }
}

TEST_CASE("gaussian_fit synthetic round trip")
{
    RngStream rng(7, 0);
    const auto h = gaussian_histogram(rng, 1'000'000, 5_ns, 335.0, 25_ps, 10_ns);
    const auto f = gaussian_fit(h);
    CHECK(std::abs(f.peak_ps - 5000.0) < 2.0);
    CHECK(std::abs(f.fwhm_ps - 335.0) < 3.0);
    CHECK(f.residual < 2.0);

    for (const double fwhm : {120.0, 164.0, 608.0}) {
        const auto g = gaussian_fit(gaussian_histogram(rng, 200'000, 3_ns, fwhm, 25_ps, 8_ns));
        CAPTURE(fwhm);
        CHECK(std::abs(g.fwhm_ps / fwhm - 1.0) < 0.03);
        CHECK(std::abs(g.peak_ps - 3000.0) < 3.0);
    }
}

TEST_CASE("gaussian_fit on a low-count histogram is not biased wide")
{
    // About a thousand events per histogram, the smallest sample the pair scan fits, averaged over many seeds.
    std::vector<double> fw;
    for (std::uint64_t s = 0; s < 200; ++s) {
        RngStream rng(8, s);
        fw.push_back(gaussian_fit(gaussian_histogram(rng, 1000, 5_ns, 472.0, 25_ps, 10_ns)).fwhm_ps);
    }
    CHECK(std::abs(oracle::mean(fw) - 472.0) < 10.0);
}

TEST_CASE("gaussian_fit errors and multiple modes")
{
    Histogram single(25_ps, 0_ps, 100);
    single.counts[40] = 1000;
    CHECK_THROWS_AS(gaussian_fit(single), std::runtime_error);
    CHECK_THROWS_AS(gaussian_fit(Histogram(25_ps, 0_ps, 100)), std::runtime_error);

    RngStream rng(9, 0);
    std::vector<TimePs> v;
    for (int i = 0; i < 200'000; ++i) v.push_back(sample_gaussian_fwhm(rng, 2_ns, 200.0));
    for (int i = 0; i < 150'000; ++i) v.push_back(sample_gaussian_fwhm(rng, 8_ns, 200.0));
    const auto f = gaussian_fit(build_histogram(v, 25_ps, 10_ns));
    CHECK(std::abs(f.peak_ps - 2000.0) < 5.0);
    CHECK(std::abs(f.fwhm_ps - 200.0) < 8.0);
}

TEST_CASE("property: gaussian_fit is scale-equivariant")
{
    RngStream rng(10, 0);
    for (int trial = 0; trial < 5; ++trial) {
        auto h = gaussian_histogram(rng, 20'000, 4_ns, 150.0 + 300.0 * rng.uniform(), 25_ps, 8_ns);
        const auto f = gaussian_fit(h);
        for (const std::uint64_t c : {2u, 7u, 100u}) {
            Histogram s = h;
            for (auto& k : s.counts) k *= c;
            const auto g = gaussian_fit(s);
            CHECK(g.peak_ps == doctest::Approx(f.peak_ps).epsilon(1e-6));
            CHECK(g.fwhm_ps == doctest::Approx(f.fwhm_ps).epsilon(1e-6));
            CHECK(g.amplitude == doctest::Approx(f.amplitude * static_cast<double>(c)).epsilon(1e-6));
        }
    }
}

TEST_CASE("autocorrelation of a periodic comb")
{
    std::vector<TimePs> comb;
    for (std::int64_t k = 0; k < 200; ++k) comb.push_back(521_ps * k);
    const auto h = autocorrelation(comb, 10_ns, 20_ps);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const auto lo = h.bin_start(i).ps();
        bool has_multiple = false;
        for (std::int64_t m = 1; m * 521 < 10'000; ++m) has_multiple |= (m * 521 >= lo && m * 521 < lo + 20);
        if (has_multiple) {
            REQUIRE(h.counts[i] > 0);
        } else if (i > 0) {
            REQUIRE(h.counts[i] == 0);
        }
    }
    // Lag m*T appears once for every pair (i, i+m).
    const auto k = static_cast<std::size_t>(3 * 521 / 20);
    CHECK(h.counts[k] == 197);
}

TEST_CASE("autocorrelation of a Poisson stream is flat")
{
    RngStream rng(11, 0);
    const auto ts = cw_poisson_stream({1e6, 200_ms}, rng);
    const auto h = autocorrelation(ts, 2_us, 100_ns);
    std::vector<double> c(h.counts.begin(), h.counts.end());
    const double m = oracle::mean(c);
    for (const double x : c) CHECK(std::abs(x - m) < 5.0 * std::sqrt(m));
}

TEST_CASE("property: autocorrelation is translation-invariant")
{
    RngStream rng(12, 0);
    auto ts = cw_poisson_stream({2e7, 200_us}, rng);
    const auto h0 = autocorrelation(ts, 300_ns, 1_ns, TimePs{-500});
    for (const TimePs shift : {1_ps, 777_ns, 3_ms}) {
        std::vector<TimePs> moved;
        for (const auto t : ts) moved.push_back(t + shift);
        const auto h1 = autocorrelation(moved, 300_ns, 1_ns, TimePs{-500});
        CHECK(h1.counts == h0.counts);
        CHECK(h1.overflow == h0.overflow);
    }
}

TEST_CASE("cross_correlation lags")
{
    const std::vector<TimePs> a{0_ns, 100_ns};
    const std::vector<TimePs> b{30_ns, 130_ns};
    const auto h = cross_correlation(a, b, TimePs::zero(), 200_ns, 10_ns);
    CHECK(h.counts[3] == 2);
    CHECK(h.counts[13] == 1);
    CHECK(sum_counts(h) == 3);
}
