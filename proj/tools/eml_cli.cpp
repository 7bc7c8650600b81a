// eml: run, ablate and sweep evolving-metric experiments from a JSON config.
//
// Exit codes: 0 success, 1 invalid input (config, data, arguments), 2 numerical failure.

#include "harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace eml;
using namespace eml::cli;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string report, table, timings;
};

Json read_config(const std::string& path) {
    if (path.empty()) return Json::object();
    std::stringstream text;
    if (path == "-") {
        text << std::cin.rdbuf();
    } else {
        std::ifstream in(path);
        if (!in) throw ValidationError("config: cannot open '" + path + "'");
        text << in.rdbuf();
    }
    try {
        return Json::parse(text.str());
    } catch (const Json::parse_error& e) {
        throw ValidationError("config: " + std::string(e.what()));
    }
}

void write(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) throw ValidationError("output: cannot write '" + path + "'");
}

RunConfig load(const Common& c, const std::vector<std::string>& extra) {
    Json cfg = merge_config(read_config(c.config));
    for (const auto& o : c.overrides) apply_override(cfg, o);
    for (const auto& o : extra) apply_override(cfg, o);
    if (!c.report.empty()) apply_override(cfg, "output.report=" + c.report);
    if (!c.table.empty()) apply_override(cfg, "output.table=" + c.table);
    if (!c.timings.empty()) apply_override(cfg, "output.timings=" + c.timings);
    return parse_config(cfg);
}

void emit(const RunConfig& rc, const Outcome& o) {
    const std::string report = o.report.dump(2) + "\n";
    if (rc.report_path.empty())
        std::cout << report;
    else
        write(rc.report_path, report);
    if (!rc.table_path.empty()) write(rc.table_path, o.table);
    if (!rc.timings_path.empty()) write(rc.timings_path, o.timings.dump(2) + "\n");
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("config", c.config, "JSON config file ('-' reads standard input; omitted = defaults)");
    sub->add_option("-s,--set", c.overrides, "dotted override, e.g. hp.gamma=0.1 (repeatable)");
    sub->add_option("-o,--out", c.report, "report JSON path (default: standard output)");
    sub->add_option("-t,--table", c.table, "delimited table path");
    sub->add_option("--timings", c.timings, "per-stage wall-clock timings JSON path");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online evolving metric learning experiments"};
    app.require_subcommand(1);

    Common run_o, ablate_o, sweep_o;
    std::string variants;
    std::vector<std::string> grid;
    std::string delimiter = ",";

    auto* run = app.add_subcommand("run", "run the configured variant for `runs` seeds");
    add_common(run, run_o);
    auto* ablate = app.add_subcommand("ablate", "run every listed variant under shared seeds");
    add_common(ablate, ablate_o);
    ablate->add_option("--variants", variants, "comma-separated variants (default: config `variants`)");
    auto* sweep = app.add_subcommand("sweep", "Cartesian grid over gamma, lambda and rho");
    add_common(sweep, sweep_o);
    sweep->add_option("-g,--grid", grid, "axis=v1,v2,... with axis in gamma|lambda|rho (repeatable)");
    auto* datasets = app.add_subcommand("datasets", "list built-in synthetic specs and dataset presets");
    datasets->add_option("-d,--delimiter", delimiter, "table delimiter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*datasets) {
            if (delimiter.size() != 1) throw ValidationError("--delimiter must be a single character");
            std::cout << cmd_datasets(delimiter[0]);
            return 0;
        }
        const int workers = workers_from_env();
        if (*run) {
            const auto rc = load(run_o, {});
            emit(rc, cmd_run(rc, workers));
        } else if (*ablate) {
            std::vector<std::string> extra;
            if (!variants.empty()) {
                Json list = Json::array();
                std::stringstream ss(variants);
                for (std::string v; std::getline(ss, v, ',');) list.push_back(v);
                extra.push_back("variants=" + list.dump());
            }
            const auto rc = load(ablate_o, extra);
            emit(rc, cmd_ablate(rc, workers));
        } else if (*sweep) {
            std::vector<std::string> extra;
            for (const auto& g : grid) {
                const auto eq = g.find('=');
                if (eq == std::string::npos) throw ValidationError("--grid: expected axis=v1,v2,..., got '" + g + "'");
                Json list = Json::array();
                std::stringstream ss(g.substr(eq + 1));
                for (std::string v; std::getline(ss, v, ',');) list.push_back(v);  // kept verbatim
                extra.push_back("sweep." + g.substr(0, eq) + "=" + list.dump());
            }
            const auto rc = load(sweep_o, extra);
            emit(rc, cmd_sweep(rc, workers));
        }
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
