#include "spadsim/cli.hpp"

#include "spadsim/config.hpp"
#include "spadsim/experiments.hpp"
#include "spadsim/presets.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <ostream>
#include <vector>

namespace spadsim {

namespace {

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
    f << text;
    if (!f) throw std::runtime_error(fmt::format("failed writing '{}'", path));
}

int simulate(const std::string& path, std::ostream& out, std::ostream& err)
{
    Scenario s;
    try {
        s = load_scenario(path);
    } catch (const ConfigError& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitConfig;
    }
    try {
        const ScenarioOutput r = run_scenario(s);
        if (s.outputs.summary_json) write_file(*s.outputs.summary_json, r.summary.dump(2) + "\n");
        if (s.outputs.histogram_csv && r.histogram_csv) write_file(*s.outputs.histogram_csv, *r.histogram_csv);
        if (s.outputs.curve_csv && r.curve_csv) write_file(*s.outputs.curve_csv, *r.curve_csv);
        for (const auto& m : r.metrics) fmt::print(out, "{}\n", format_metric(m));
    } catch (const std::exception& e) {
        fmt::print(err, "simulation failed: {}\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}

int validate_config(const std::string& path, std::ostream& out, std::ostream& err)
{
    try {
        const Scenario s = load_scenario(path);
        fmt::print(out, "ok: {} scenario, seed {}\n", to_string(s.kind), s.seed);
        return kExitOk;
    } catch (const ConfigError& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitConfig;
    }
}

int show_preset(const std::string& name, std::ostream& out, std::ostream& err)
{
    DetectorPreset p;
    try {
        p = preset(name);
    } catch (const std::invalid_argument& e) {
        fmt::print(err, "{}\n", e.what());
        return kExitConfig;
    }
    nlohmann::json prov = nlohmann::json::array();
    for (const auto& n : p.provenance) prov.push_back({{"field", n.field}, {"note", n.note}, {"anchored", n.anchored}});
    nlohmann::json j{{"name", p.name},
                     {"description", p.description},
                     {"detector", detector_to_json(p.params)},
                     {"provenance", std::move(prov)}};
    fmt::print(out, "{}\n", j.dump(2));
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Behavioral simulator for actively quenched single-photon avalanche detectors", "spadsim"};
    app.require_subcommand(1);

    std::string sim_path;
    auto* sim = app.add_subcommand("simulate", "Run a scenario config and write its declared outputs");
    sim->add_option("config", sim_path, "Scenario JSON file")->required();

    std::string val_path;
    auto* val = app.add_subcommand("validate", "Check a scenario config without running it");
    val->add_option("config", val_path, "Scenario JSON file")->required();

    auto* pre = app.add_subcommand("preset", "Inspect detector presets");
    pre->require_subcommand(1);
    auto* pre_list = pre->add_subcommand("list", "List preset names");
    std::string pre_name;
    auto* pre_show = pre->add_subcommand("show", "Print a preset in config-file form");
    pre_show->add_option("name", pre_name, "Preset name")->required();

    KeyRateInputs k;
    double bin_ps = 0.0;
    auto* key = app.add_subcommand("keyrate", "Secret key rate M * eta^2 * n * xi / bin width");
    // Checked after parsing so that an unknown flag is reported before a missing one.
    std::vector<CLI::Option*> key_opts;
    key_opts.push_back(key->add_option("--m", k.m_channels, "Multiplexed spatial modes"));
    key_opts.push_back(key->add_option("--eta", k.eta, "Per-arm channel and detection efficiency"));
    key_opts.push_back(key->add_option("--n-mean", k.n_mean, "Mean photons per time bin"));
    key_opts.push_back(key->add_option("--xi", k.xi, "Bits per coincidence"));
    key_opts.push_back(key->add_option("--bin-ps", bin_ps, "Time-bin width in picoseconds"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (*sim) return simulate(sim_path, out, err);
    if (*val) return validate_config(val_path, out, err);
    if (*pre_list) {
        for (const auto& name : preset_names()) fmt::print(out, "{:<12} {}\n", name, preset(name).description);
        return kExitOk;
    }
    if (*pre_show) return show_preset(pre_name, out, err);
    if (*key) {
        for (const auto* o : key_opts) {
            if (o->count() == 0) {
                fmt::print(err, "{} is required\n", o->get_name());
                return kExitConfig;
            }
        }
        if (!std::isfinite(bin_ps) || bin_ps < 1.0 || bin_ps > 9.2e18) {
            fmt::print(err, "--bin-ps: must be a positive number of picoseconds\n");
            return kExitConfig;
        }
        k.delta_t = round_ps(bin_ps);
        try {
            validate(k);
        } catch (const std::invalid_argument& e) {
            fmt::print(err, "{}\n", e.what());
            return kExitConfig;
        }
        fmt::print(out, "{}\n", format_metric({"secret_key_rate", secret_key_rate(k), std::nullopt, "bit/s"}));
        return kExitOk;
    }
    return kExitConfig;
}

} // namespace spadsim
