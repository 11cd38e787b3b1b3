#include "gridshed/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridshed::control {

std::vector<double> loading_rates(powerflow::PowerFlowSolution const& solution, Network const& network) {
    std::vector<double> rates(network.lines.size(), 0.0);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        if (k >= solution.line_active.size() || !solution.line_active[k]) continue;
        rates[k] = relay::overcurrent_rate(solution.i_line_amps[k], network.lines[k].pickup_current);
    }
    return rates;
}

Eigen::MatrixXd impact_factors(OrientedIncidence const& incidence, std::span<const double> rates) {
    if (incidence.cols() != rates.size()) {
        throw std::invalid_argument("impact_factors: incidence has " + std::to_string(incidence.cols()) +
                                    " lines but " + std::to_string(rates.size()) + " rates given");
    }
    auto const n = static_cast<Eigen::Index>(incidence.rows());
    auto const b = static_cast<Eigen::Index>(incidence.cols());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, b);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < b; ++k) {
            int const a = incidence.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
            if (a != 0) m(i, k) = a * rates[static_cast<std::size_t>(k)];
        }
    }
    return m;
}

std::optional<int> critical_line(std::span<const double> row, std::span<const double> urgency) {
    std::optional<int> best;
    for (std::size_t k = 0; k < row.size(); ++k) {
        if (!(row[k] > 0.0)) continue;
        if (!best) {
            best = static_cast<int>(k);
            continue;
        }
        auto const c = static_cast<std::size_t>(*best);
        if (row[k] > row[c] || (row[k] == row[c] && urgency[k] < urgency[c])) best = static_cast<int>(k);
    }
    return best;
}

std::vector<double> line_urgency(Network const& network, std::span<const relay::RelayState> relays,
                                 std::span<const double> rates) {
    std::vector<double> out(network.lines.size(), relay::kInfiniteTime);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        out[k] = relay::remaining_time(relays[k], rates[k], network.lines[k].curve);
    }
    return out;
}

void select_critical_lines(ImpactFactorTable& table, std::span<const double> urgency) {
    auto const n = static_cast<std::size_t>(table.if_matrix.rows());
    auto const b = static_cast<std::size_t>(table.if_matrix.cols());
    table.critical_line.assign(n, std::nullopt);
    table.assigned_time.assign(n, relay::kInfiniteTime);
    std::vector<double> row(b);
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= table.candidate.size() || !table.candidate[i]) continue;
        for (std::size_t k = 0; k < b; ++k) {
            row[k] = table.if_matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        }
        table.critical_line[i] = critical_line(row, urgency);
    }
}

void assign_times(ImpactFactorTable& table, Network const& network,
                  std::span<const relay::RelayState> relays, std::span<const double> rates) {
    table.assigned_time.assign(table.critical_line.size(), relay::kInfiniteTime);
    for (std::size_t i = 0; i < table.critical_line.size(); ++i) {
        if (!table.critical_line[i]) continue;
        auto const c = static_cast<std::size_t>(*table.critical_line[i]);
        table.assigned_time[i] = relay::remaining_time(relays[c], rates[c], network.lines[c].curve);
    }
}

std::vector<int> priority_order(ImpactFactorTable const& table) {
    std::vector<std::size_t> buses;
    for (std::size_t i = 0; i < table.assigned_time.size(); ++i) {
        if (table.critical_line[i] && std::isfinite(table.assigned_time[i])) buses.push_back(i);
    }
    auto critical_if = [&](std::size_t i) {
        return table.if_matrix(static_cast<Eigen::Index>(i), *table.critical_line[i]);
    };
    std::sort(buses.begin(), buses.end(), [&](std::size_t a, std::size_t b) {
        if (table.assigned_time[a] != table.assigned_time[b]) return table.assigned_time[a] < table.assigned_time[b];
        double const ia = critical_if(a);
        double const ib = critical_if(b);
        if (ia != ib) return ia > ib;
        return a < b;
    });
    std::vector<int> out;
    out.reserve(buses.size());
    for (std::size_t i : buses) out.push_back(static_cast<int>(i) + 1);
    return out;
}

ImpactFactorTable build_table(Network const& network, ServiceState const& status,
                              OrientedIncidence const& incidence, std::span<const double> rates,
                              std::span<const relay::RelayState> relays) {
    ImpactFactorTable table;
    table.if_matrix = impact_factors(incidence, rates);
    table.candidate.assign(network.buses.size(), false);
    for (std::size_t l = 0; l < network.loads.size(); ++l) {
        if (connected_fraction(network, status, l) > 0.0) {
            table.candidate[static_cast<std::size_t>(network.loads[l].bus - 1)] = true;
        }
    }
    select_critical_lines(table, line_urgency(network, relays, rates));
    assign_times(table, network, relays, rates);
    return table;
}

ControlDecision control_step(Network const& network, ServiceState const& status,
                             ImpactFactorTable const& table, std::span<const double> rates,
                             std::span<const relay::RelayState> relays, ControllerPolicy const& policy,
                             double now) {
    ControlDecision decision;
    if (!policy.enabled) return decision;

    double most_urgent = relay::kInfiniteTime;
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        if (!(rates[k] > policy.trigger_rate) || relays[k].tripped) continue;
        double const left = relay::remaining_time(relays[k], rates[k], network.lines[k].curve);
        if (left < policy.safety_margin_s && left < most_urgent) {
            most_urgent = left;
            decision.trigger_line = static_cast<int>(k) + 1;
        }
    }
    if (decision.trigger_line == 0) return decision;

    for (int bus : priority_order(table)) {
        if (!status.bus_energized[static_cast<std::size_t>(bus - 1)]) continue;
        for (std::size_t l = 0; l < network.loads.size(); ++l) {
            if (network.loads[l].bus != bus) continue;
            auto const& flags = status.stage_connected[l];
            auto it = std::find(flags.begin(), flags.end(), true);
            if (it == flags.end()) continue;
            ShedCommand cmd;
            cmd.load_bus = bus;
            cmd.load_index = static_cast<int>(l);
            cmd.stage = static_cast<int>(it - flags.begin());
            cmd.issue_time = now;
            cmd.cause = *table.critical_line[static_cast<std::size_t>(bus - 1)] + 1;
            decision.commands.push_back(cmd);
            return decision;
        }
    }
    decision.exhausted = true;
    return decision;
}

}  // namespace gridshed::control
