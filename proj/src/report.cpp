#include "gridshed/report.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace gridshed::report {

namespace {

std::string num(double v, int digits = 4) { return format_number(v, digits); }

double max_rate(sim::RunResult const& r) {
    auto const top = final_rates(r, 1);
    return top.empty() ? 0.0 : top.front().second;
}

void write_run(Network const& network, sim::RunResult const& r, std::ostream& out) {
    auto const& records = r.log.records;
    out << "- Simulated to t = " << num(r.final_state.time) << " s"
        << (r.terminated_early ? " (terminated early: no energized buses)" : "") << "\n";
    out << "- Relay trips: " << r.log.count(sim::RecordKind::RelayTrip) << "\n";
    out << "- Shed commands: " << r.sheds.size() << ", nominal total " << num(r.shed_mw, 6) << " MW\n";
    out << "- Final frequency deviation: " << num(r.final_state.df) << " Hz\n";
    out << "- Final maximum loading rate: " << num(max_rate(r)) << " pu\n";
    out << "- Island blackouts: " << r.log.count(sim::RecordKind::IslandBlackout) << "\n\n";

    out << "**Shed order**\n\n";
    int idx = 0;
    for (auto const& rec : records) {
        if (rec.kind != sim::RecordKind::Shed) continue;
        out << ++idx << ". t = " << num(rec.t) << " s: " << rec.subject << ", relieving " << rec.cause << "\n";
    }
    if (idx == 0) out << "none\n";
    out << "\n**Tripped lines**\n\n";
    idx = 0;
    for (auto const& rec : records) {
        if (rec.kind != sim::RecordKind::RelayTrip) continue;
        int const id = std::stoi(rec.subject.substr(5));
        Line const& line = network.lines[static_cast<std::size_t>(id - 1)];
        out << ++idx << ". t = " << num(rec.t) << " s: " << rec.subject << " (" << line.from_bus << "-"
            << line.to_bus << "), " << rec.cause << "\n";
    }
    if (idx == 0) out << "none\n";
    out << "\n**Most loaded lines at the end**\n\n| line | buses | rate [pu] |\n|---|---|---|\n";
    for (auto const& [id, rate] : final_rates(r, 10)) {
        Line const& line = network.lines[static_cast<std::size_t>(id - 1)];
        out << "| " << id << " | " << line.from_bus << "-" << line.to_bus << " | " << num(rate) << " |\n";
    }
    out << "\n";
}

}  // namespace

std::vector<std::pair<int, double>> final_rates(sim::RunResult const& result, std::size_t limit) {
    std::vector<std::pair<int, double>> out;
    if (result.traces.rows.empty()) return out;
    auto const& row = result.traces.rows.back();
    for (std::size_t k = 0; k < result.final_state.status.line_in_service.size(); ++k) {
        if (!result.final_state.status.line_in_service[k]) continue;
        out.emplace_back(static_cast<int>(k) + 1, row[result.traces.line_column(k)]);
    }
    std::stable_sort(out.begin(), out.end(), [](auto const& a, auto const& b) { return a.second > b.second; });
    if (out.size() > limit) out.resize(limit);
    return out;
}

void write_report(Network const& network, sim::Scenario const& scenario, std::vector<LabeledRun> const& runs,
                  std::ostream& sink) {
    sink << "# Cascade simulation report\n\n";
    sink << "- Case: `" << scenario.case_path << "` (" << network.buses.size() << " buses, "
         << network.lines.size() << " lines, " << network.loads.size() << " loads, " << network.generators.size()
         << " generators)\n";
    sink << "- Horizon: " << num(scenario.t_end) << " s, step " << num(scenario.dt) << " s, control interval "
         << num(scenario.controller.control_interval_s) << " s, safety margin "
         << num(scenario.controller.safety_margin_s) << " s\n";
    sink << "- Events:";
    if (scenario.events.empty()) sink << " none";
    sink << "\n";
    for (auto const& e : scenario.events) {
        char const* kind = e.kind == sim::ElementKind::Generator ? "generator"
                           : e.kind == sim::ElementKind::Line    ? "line"
                                                                 : "load @bus";
        sink << "  - t = " << num(e.t) << " s: outage of " << kind << " " << e.target << "\n";
    }
    sink << "\n";

    if (runs.size() > 1) {
        sink << "## Comparison\n\n| metric |";
        for (auto const& r : runs) sink << " " << r.label << " |";
        sink << "\n|---|";
        for (std::size_t i = 0; i < runs.size(); ++i) sink << "---|";
        sink << "\n";
        auto row = [&](char const* name, auto value) {
            sink << "| " << name << " |";
            for (auto const& r : runs) sink << " " << value(*r.result) << " |";
            sink << "\n";
        };
        row("relay trips", [](sim::RunResult const& r) { return std::to_string(r.log.count(sim::RecordKind::RelayTrip)); });
        row("shed stages", [](sim::RunResult const& r) { return std::to_string(r.sheds.size()); });
        row("shed MW", [](sim::RunResult const& r) { return num(r.shed_mw, 6); });
        row("final df [Hz]", [](sim::RunResult const& r) { return num(r.final_state.df); });
        row("final max rate [pu]", [](sim::RunResult const& r) { return num(max_rate(r)); });
        row("island blackouts",
            [](sim::RunResult const& r) { return std::to_string(r.log.count(sim::RecordKind::IslandBlackout)); });
        sink << "\n";
    }

    for (auto const& r : runs) {
        sink << "## " << r.label << "\n\n";
        write_run(network, *r.result, sink);
    }
}

}  // namespace gridshed::report
