// Command-line front end: cavityqed [scenario] [--config FILE] [--key value ...]

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "cavityqed/scenarios.hpp"

namespace sc = cavityqed::scenarios;

int main(int argc, char** argv) {
    CLI::App app{"Driven molecule-cavity simulator: spectra, phase, photon statistics, saturation and derived quantities.\n"
                 "Frequencies are FWHM-type: GHz for cavity, coupling, detunings and drive; MHz for molecular widths."};

    std::string scenario;
    std::string config_path;
    bool list = false;
    std::string names;
    for (const auto& n : sc::scenario_names()) names += (names.empty() ? "" : " | ") + n;
    app.add_option("scenario", scenario, "Scenario to run: " + names + " (default derive)");
    app.add_option("-c,--config", config_path, "INI configuration file; command-line flags override its values");
    app.add_flag("--list", list, "List scenario names and exit");

    std::map<std::string, std::string> flag_values;
    for (const auto& k : sc::key_registry()) {
        if (k.id() == "run.scenario") continue;
        std::string desc = k.help;
        if (!k.unit.empty()) desc += " [" + k.unit + "]";
        desc += " ([" + k.section + "] " + k.key + ")";
        if (k.unit == "bool") {
            app.add_flag_function(k.flag(), [&flag_values, id = k.id()](std::int64_t) { flag_values[id] = "true"; }, desc)
                ->group(k.section);
        } else {
            app.add_option(k.flag(), flag_values[k.id()], desc)->group(k.section)->type_name("VALUE");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (list) {
        for (const auto& n : sc::scenario_names()) std::cout << n << "\n";
        return 0;
    }

    sc::ScenarioConfig cfg;
    try {
        sc::RawConfig raw;
        if (!config_path.empty()) raw = sc::parse_ini_file(config_path);
        for (const auto& k : sc::key_registry()) {
            const auto it = flag_values.find(k.id());
            if (it == flag_values.end() || it->second.empty()) continue;
            raw[k.id()] = {it->second, k.flag()};
        }
        if (!scenario.empty()) raw["run.scenario"] = {scenario, "command line"};
        cfg = sc::build_config(raw);
    } catch (const cavityqed::InvalidArgument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    }
    return sc::run(cfg, std::cout, std::cerr);
}
