#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/incidence.hpp"
#include "gridshed/network.hpp"
#include "gridshed/powerflow.hpp"
#include "gridshed/relay.hpp"

namespace gridshed::control {

struct ControllerPolicy {
    bool enabled = true;
    double trigger_rate = 1.0;
    double safety_margin_s = 1.0;
    double control_interval_s = 0.5;
};

/// Impact factors and the urgency each load bus inherits from its most
/// stressed inbound line. Rows are buses, columns lines (0-based).
struct ImpactFactorTable {
    Eigen::MatrixXd if_matrix;
    std::vector<bool> candidate;                   // bus hosts a connected load stage
    std::vector<std::optional<int>> critical_line;  // 0-based line index
    std::vector<double> assigned_time;              // s; infinite when no critical line
};

struct ShedCommand {
    int load_bus = 0;
    int load_index = 0;  // 0-based position in Network::loads
    int stage = 0;       // 0-based stage
    double issue_time = 0.0;
    int cause = 0;  // line id (1-based)

    friend bool operator==(ShedCommand const&, ShedCommand const&) = default;
};

/// Current over pickup for each line that carried flow; 0 for the rest.
std::vector<double> loading_rates(powerflow::PowerFlowSolution const& solution, Network const& network);

/// IF(i,k) = A(i,k) * rate(k). Throws std::invalid_argument on a size mismatch.
Eigen::MatrixXd impact_factors(OrientedIncidence const& incidence, std::span<const double> rates);

/// Argmax of a bus row; nullopt unless the maximum is positive. Exact ties go
/// to the line with the smaller `urgency` (remaining trip time), then to the
/// lower index.
std::optional<int> critical_line(std::span<const double> row, std::span<const double> urgency);

/// Time each line's relay has left at its present rate.
std::vector<double> line_urgency(Network const& network, std::span<const relay::RelayState> relays,
                                 std::span<const double> rates);

/// Fills critical_line for every candidate bus and resets assigned_time.
void select_critical_lines(ImpactFactorTable& table, std::span<const double> urgency);

/// assigned_time(i) = remaining time of the relay on critical_line(i).
void assign_times(ImpactFactorTable& table, Network const& network,
                  std::span<const relay::RelayState> relays, std::span<const double> rates);

/// Candidate load buses (1-based ids) with finite assigned time, most urgent
/// first; ties by larger IF on the critical line, then lower bus id.
std::vector<int> priority_order(ImpactFactorTable const& table);

/// Composes impact_factors, select_critical_lines and assign_times for the
/// current snapshot.
ImpactFactorTable build_table(Network const& network, ServiceState const& status,
                              OrientedIncidence const& incidence, std::span<const double> rates,
                              std::span<const relay::RelayState> relays);

struct ControlDecision {
    std::vector<ShedCommand> commands;
    bool exhausted = false;  // overload persists but nothing is left to shed
    int trigger_line = 0;    // most urgent line id that armed the controller
};

/// One control interval: if some line is above the trigger rate with less
/// than the safety margin left on its relay, shed the next connected stage
/// of the highest-priority load. At most one stage per call.
ControlDecision control_step(Network const& network, ServiceState const& status,
                             ImpactFactorTable const& table, std::span<const double> rates,
                             std::span<const relay::RelayState> relays, ControllerPolicy const& policy,
                             double now);

}  // namespace gridshed::control
