#include "spadsim/config.hpp"
#include "spadsim/presets.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

using namespace spadsim;
using namespace spadsim::literals;
using nlohmann::json;

namespace {

json keyrate_config()
{
    return json{{"version", 1},
                {"experiment", "keyrate"},
                {"seed", 1},
                {"keyrate", {{"m", 1.0}, {"eta", 0.1}, {"n_mean", 0.001}, {"xi", 8.0}, {"bin_ps", 260}}}};
}

json qkd_config()
{
    return json{{"version", 1},
                {"experiment", "qkd"},
                {"seed", 5},
                {"detector", "custom-aq"},
                {"source",
                 {{"rate_factor", 16}, {"mean_pairs_per_pulse", 0.01}, {"eta_alice", 0.5}, {"eta_bob", 0.5}, {"duration_ps", 1000000}}}};
}

std::string error_of(const json& j)
{
    try {
        parse_scenario(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("shipped configs parse")
{
    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(SPADSIM_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(load_scenario(entry.path().string()));
        ++n;
    }
    CHECK(n >= 5);
}

TEST_CASE("minimal configs")
{
    const auto k = parse_scenario(keyrate_config());
    CHECK(k.kind == ExperimentKind::KeyRate);
    CHECK(k.seed == 1);
    CHECK(std::get<KeyRateConfig>(k.body).inputs.delta_t == 260_ps);
    CHECK(!k.outputs.summary_json);

    const auto q = parse_scenario(qkd_config());
    const auto& c = std::get<QkdConfig>(q.body);
    CHECK(c.source.period == 521_ps);
    CHECK(c.frame.bin_width == 521_ps);
    CHECK(c.frame.bins_per_frame == 1024);
    CHECK(c.detector_a.label == "custom-aq");
    CHECK(c.detector_b.label == "custom-aq");
    CHECK(c.duration == 1_us);
}

TEST_CASE("unknown keys are rejected with their path")
{
    auto top = keyrate_config();
    top["sed"] = 3;
    CHECK(error_of(top).find("sed") != std::string::npos);

    auto nested = qkd_config();
    nested["source"]["eta_alcie"] = 0.5;
    CHECK(error_of(nested).find("source.eta_alcie") != std::string::npos);

    auto det = qkd_config();
    det["detector"] = {{"preset", "custom-aq"}, {"dark_rte", 10.0}};
    CHECK(error_of(det).find("detector.dark_rte") != std::string::npos);

    auto out = keyrate_config();
    out["outputs"] = {{"histogram_csv", "h.csv"}};
    CHECK(error_of(out).find("outputs.histogram_csv") != std::string::npos);
}

TEST_CASE("malformed values name the field")
{
    auto check_field = [](json j, const std::string& field) {
        const auto msg = error_of(j);
        CAPTURE(msg);
        CHECK(msg.find(field) != std::string::npos);
    };
    auto j = keyrate_config();
    j.erase("seed");
    check_field(j, "seed");
    j = keyrate_config();
    j["seed"] = -4;
    check_field(j, "seed");
    j = keyrate_config();
    j["version"] = 2;
    check_field(j, "version");
    j = keyrate_config();
    j["experiment"] = "fig99";
    check_field(j, "experiment");
    j = keyrate_config();
    j["keyrate"]["bin_ps"] = 2.5;
    check_field(j, "keyrate.bin_ps");
    j = keyrate_config();
    j["keyrate"]["eta"] = 1.5;
    check_field(j, "keyrate");
    j = qkd_config();
    j["detector"] = "spcm";
    check_field(j, "detector");
    j = qkd_config();
    j["source"]["mean_pairs_per_pulse"] = "lots";
    check_field(j, "source.mean_pairs_per_pulse");
    j = qkd_config();
    j["detector_a"] = "spcm-aqrh";
    check_field(j, "detector");
    j = qkd_config();
    j["frame"] = {{"bins_per_frame", 1000}};
    check_field(j, "frame");
    j = qkd_config();
    j["source"]["rate_factor"] = 3;
    check_field(j, "source");
}

TEST_CASE("detector overrides and afterpulse probability")
{
    auto j = qkd_config();
    j["detector"] = {{"preset", "spcm-aqrh"}, {"dark_rate", 10.0}, {"afterpulse", {{"probability", 0.01}}}, {"blanking", nullptr}};
    const auto s = parse_scenario(j);
    const auto& d = std::get<QkdConfig>(s.body).detector_a;
    CHECK(d.label == "spcm-aqrh");
    CHECK(d.params.dark_rate == 10.0);
    CHECK(d.params.tau_dead0 == 29.1_ns);
    CHECK(d.params.afterpulse.mu == doctest::Approx(calibrate_afterpulse_mu(0.01, 32_ns, 29.1_ns)));

    auto both = qkd_config();
    both["detector"] = {{"preset", "custom-aq"}, {"afterpulse", {{"probability", 0.01}, {"mu", 0.02}}}};
    CHECK(error_of(both).find("afterpulse") != std::string::npos);
}

TEST_CASE("property: preset export round-trips through the config schema")
{
    for (const auto& name : preset_names()) {
        const DetectorParams p = preset(name).params;
        const json exported = detector_to_json(p);
        const auto back = detector_from_json(exported, "detector");
        CAPTURE(name);
        CHECK(detector_to_json(back.params) == exported);
        CHECK(back.params.tau_dead0 == p.tau_dead0);
        CHECK(back.params.afterpulse.mu == p.afterpulse.mu);
        CHECK(back.params.blanking.has_value() == p.blanking.has_value());
    }
}

TEST_CASE("load_scenario errors")
{
    CHECK_THROWS_AS(load_scenario("/nonexistent/config.json"), ConfigError);
    const auto tmp = std::filesystem::temp_directory_path() / "spadsim_bad_syntax.json";
    {
        std::ofstream f(tmp);
        f << "{ \"version\": 1, ";
    }
    CHECK_THROWS_AS(load_scenario(tmp.string()), ConfigError);
    std::filesystem::remove(tmp);
}
