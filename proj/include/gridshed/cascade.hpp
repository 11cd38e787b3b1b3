#pragma once

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridshed/controller.hpp"
#include "gridshed/network.hpp"
#include "gridshed/powerflow.hpp"
#include "gridshed/relay.hpp"
#include "gridshed/trace.hpp"

namespace gridshed::sim {

enum class ElementKind { Generator, Line, Load };

/// A scheduled outage. Generators and lines are addressed by 1-based
/// position/id; loads by the bus they sit on.
struct ScheduledEvent {
    double t = 0.0;
    ElementKind kind = ElementKind::Generator;
    int target = 0;
};

struct FrequencyParams {
    double damping = 1.0;  // pu on the in-service generator MVA
};

struct Scenario {
    std::string case_path;
    std::vector<ScheduledEvent> events;
    double t_end = 20.0;
    double dt = 0.1;
    control::ControllerPolicy controller;
    FrequencyParams frequency;
    relay::RelaySettings relay;
};

class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Parses a scenario document; a relative `case` path is resolved against
/// `base_dir`.
Scenario load_scenario(std::istream& source, std::string const& base_dir = ".");
Scenario load_scenario_file(std::string const& path);

/// Checks times, step and event targets against `network`.
void check_scenario(Scenario const& scenario, Network const& network);

enum class RecordKind { Contingency, RelayTrip, Shed, IslandBlackout, ControllerExhausted, SolverFailure };

std::string to_string(RecordKind kind);

struct LogRecord {
    double t = 0.0;
    RecordKind kind = RecordKind::Contingency;
    std::string subject;
    std::string cause;
};

struct EventLog {
    std::vector<LogRecord> records;

    std::size_t count(RecordKind kind) const;
};

/// One JSON object per line: {"t":..,"kind":..,"subject":..,"cause":..}.
void write_event_log(EventLog const& log, std::ostream& sink);

struct SystemState {
    double time = 0.0;
    ServiceState status;
    double df = 0.0;                          // Hz
    std::vector<double> p_ref;                // MW governor reference per generator
    std::vector<relay::RelayState> relays;    // per line
    powerflow::PowerFlowSolution solution;    // last converged composite solution
};

struct Island {
    std::vector<int> buses;  // 1-based ids, ascending
    double gen_capacity_mw = 0.0;
    double load_mw = 0.0;  // nominal connected demand
};

/// Connected components of energized buses over in-service lines, ordered by
/// their lowest bus id.
std::vector<Island> detect_islands(Network const& network, ServiceState const& status);

/// Governor output p_ref + (1/R)(-df/f0) mva_base per in-service generator,
/// with the increase clamped to [0, p_max - p_ref]. Out-of-service units get 0.
std::vector<double> redistribute_droop(Network const& network, ServiceState const& status,
                                       std::span<const double> p_ref, double df);

struct FrequencyModel {
    double h_sys = 0.0;  // s on s_sys
    double s_sys = 0.0;  // MVA
    double f0 = 60.0;
    double damping = 1.0;
};

/// Capacity-weighted inertia of the in-service generators.
FrequencyModel coi_model(Network const& network, ServiceState const& status, double damping);

/// Forward Euler on 2 H S / f0 * d(df)/dt = imbalance - D S df / f0.
/// Throws std::invalid_argument when h_sys or s_sys is not positive.
double step_frequency(double df, double imbalance_mw, FrequencyModel const& model, double dt);

struct StepDiagnostics {
    double t = 0.0;
    double p_balance_mw = 0.0;    // generation - load - losses
    double q_balance_mvar = 0.0;
    double tolerance_mw = 0.0;    // 10 x solver tolerance in MW
    int iterations = 0;
    bool converged = true;
};

struct RunOptions {
    powerflow::SolverConfig solver;
    bool dump_solver = false;
};

struct RunResult {
    EventLog log;
    TraceSet traces;
    SystemState final_state;
    std::vector<control::ShedCommand> sheds;
    double shed_mw = 0.0;  // nominal MW of all shed stages
    std::vector<StepDiagnostics> diagnostics;
    std::vector<std::string> solver_dump;
    bool blackout = false;
    bool terminated_early = false;
};

RunResult run(Network const& network, Scenario const& scenario, RunOptions const& options = {});

}  // namespace gridshed::sim
