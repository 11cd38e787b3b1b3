// Command-line front end: run scenarios, calibrate and validate cases.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "gridshed/cascade.hpp"
#include "gridshed/network.hpp"
#include "gridshed/powerflow.hpp"
#include "gridshed/report.hpp"
#include "gridshed/trace.hpp"

namespace fs = std::filesystem;
using namespace gridshed;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitBlackout = 2;

struct RunArgs {
    std::string scenario;
    std::string out_dir = "out";
    std::string controller;  // empty = as configured in the scenario
    bool csv = false;
    bool svg = false;
    bool dump_solver = false;
    bool seed_free = false;
};

std::ofstream open_out(fs::path const& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

void write_run_outputs(fs::path const& dir, sim::RunResult const& result, RunArgs const& args) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir / "traces.csv");
        write_csv(result.traces, out);
    }
    {
        auto out = open_out(dir / "events.log");
        sim::write_event_log(result.log, out);
    }
    if (args.svg) {
        for (auto const& [name, chart] : standard_charts(result.traces)) {
            auto out = open_out(dir / (name + ".svg"));
            render_svg(result.traces, chart, out);
        }
    }
    if (args.dump_solver) {
        auto out = open_out(dir / "solver.log");
        for (auto const& line : result.solver_dump) out << line << '\n';
    }
}

int cmd_run(RunArgs const& args) {
    if (!fs::exists(args.scenario)) {
        std::cerr << "error: scenario file not found: " << args.scenario << "\n";
        return kExitUsage;
    }
    sim::Scenario scenario;
    Network network;
    try {
        scenario = sim::load_scenario_file(args.scenario);
        network = load_case_file(scenario.case_path);
        sim::check_scenario(scenario, network);
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::vector<std::pair<std::string, bool>> variants;
    if (args.controller.empty()) {
        variants.emplace_back(scenario.controller.enabled ? "controller on" : "controller off",
                              scenario.controller.enabled);
    } else if (args.controller == "both") {
        variants = {{"controller on", true}, {"controller off", false}};
    } else {
        variants.emplace_back("controller " + args.controller, args.controller == "on");
    }

    sim::RunOptions options;
    options.dump_solver = args.dump_solver;

    std::vector<std::future<sim::RunResult>> jobs;
    for (auto const& [label, enabled] : variants) {
        sim::Scenario sc = scenario;
        sc.controller.enabled = enabled;
        jobs.push_back(std::async(std::launch::async, [&network, sc, &options] { return sim::run(network, sc, options); }));
    }
    std::vector<sim::RunResult> results;
    try {
        for (auto& j : jobs) results.push_back(j.get());
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    fs::path const out_dir(args.out_dir);
    bool blackout = false;
    std::vector<report::LabeledRun> labeled;
    try {
        fs::create_directories(out_dir);
        for (std::size_t i = 0; i < results.size(); ++i) {
            fs::path dir = out_dir;
            if (results.size() > 1) dir /= variants[i].second ? "controller-on" : "controller-off";
            write_run_outputs(dir, results[i], args);
            blackout = blackout || results[i].blackout;
            labeled.push_back({variants[i].first, &results[i]});
        }
        auto out = open_out(out_dir / "report.md");
        report::write_report(network, scenario, labeled, out);
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    for (std::size_t i = 0; i < results.size(); ++i) {
        auto const& r = results[i];
        std::cout << variants[i].first << ": " << r.log.count(sim::RecordKind::RelayTrip) << " relay trip(s), "
                  << r.sheds.size() << " shed stage(s) (" << format_number(r.shed_mw, 6) << " MW), final df "
                  << format_number(r.final_state.df, 4) << " Hz\n";
    }
    std::cout << "wrote " << (out_dir / "report.md").string() << "\n";
    return blackout ? kExitBlackout : kExitOk;
}

int cmd_calibrate(std::string const& case_path, double target, std::string const& out_path) {
    try {
        Network const net = load_case_file(case_path);
        auto const sol = powerflow::solve_ac(net, powerflow::OperatingPoint::base_case(net));
        if (!sol.converged) {
            std::cerr << "error: base case does not converge: " << sol.failure << "\n";
            return kExitUsage;
        }
        Network const calibrated = powerflow::calibrate_ratings(net, sol, target);
        if (auto v = validate(calibrated); !v.empty()) {
            std::cerr << "error: calibrated case violates " << v.front().element << ": " << v.front().rule << "\n";
            return kExitUsage;
        }
        if (out_path.empty() || out_path == "-") {
            save_case(calibrated, std::cout);
        } else {
            auto out = open_out(out_path);
            save_case(calibrated, out);
        }
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

int cmd_validate(std::string const& case_path) {
    try {
        Network const net = load_case_file(case_path);
        std::cout << case_path << ": ok (" << net.buses.size() << " buses, " << net.lines.size() << " lines, "
                  << net.loads.size() << " loads, " << net.generators.size() << " generators)\n";
        return kExitOk;
    } catch (std::exception const& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasi-steady-state cascading outage simulator with thermal-limit load shedding"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Simulate a scenario");
    run->add_option("scenario", run_args.scenario, "Scenario JSON file")->required();
    run->add_option("--out", run_args.out_dir, "Output directory")->capture_default_str();
    run->add_option("--controller", run_args.controller, "Controller on, off or both (default: as in scenario)")
        ->check(CLI::IsMember({"on", "off", "both"}));
    run->add_flag("--csv", run_args.csv, "Write traces.csv (always written; accepted for scripts)");
    run->add_flag("--svg", run_args.svg, "Write SVG charts of frequency, voltages, loads and rates");
    run->add_flag("--dump-solver", run_args.dump_solver, "Write per-solve Newton mismatch history to solver.log");
    run->add_flag("--seed-free", run_args.seed_free, "No-op: runs are always deterministic");

    std::string cal_case, cal_out;
    double cal_target = 0.85;
    auto* cal = app.add_subcommand("calibrate", "Rate every line so the base case loads it at a target fraction");
    cal->add_option("case", cal_case, "Case JSON file")->required();
    cal->add_option("--target", cal_target, "Target loading in pu of rating")->capture_default_str();
    cal->add_option("--out", cal_out, "Output case file ('-' for stdout)");

    std::string val_case;
    auto* val = app.add_subcommand("validate", "Check a case file");
    val->add_option("case", val_case, "Case JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        return app.exit(e);
    } catch (CLI::ParseError const& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*run) return cmd_run(run_args);
    if (*cal) return cmd_calibrate(cal_case, cal_target, cal_out);
    if (*val) return cmd_validate(val_case);
    return kExitUsage;
}
