#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridshed/relay.hpp"

namespace gridshed {

enum class BusKind { Slack, PV, PQ };

std::string to_string(BusKind kind);

struct Bus {
    int id = 0;  // 1..n
    BusKind kind = BusKind::PQ;
    double base_kv = 0.0;
    double v_setpoint = 1.0;  // pu, used for PV and slack buses

    friend bool operator==(Bus const&, Bus const&) = default;
};

struct Line {
    int id = 0;  // 1..b
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;        // pu on s_base
    double x = 0.0;        // pu on s_base
    double b_shunt = 0.0;  // pu total charging
    double rating_amps = 0.0;
    double pickup_current = 0.0;  // amps
    relay::RelayCurve curve = relay::very_inverse();
    bool in_service = true;

    friend bool operator==(Line const&, Line const&) = default;
};

inline constexpr double kDefaultKpv = 1.0;
inline constexpr double kDefaultKqv = 2.0;

/// Relative load change per relative frequency change.
inline constexpr double kDefaultFrequencySensitivityPuPerPu = 1.0;

struct Load {
    int bus = 0;
    double p0 = 0.0;  // MW at nominal voltage and frequency
    double q0 = 0.0;  // MVAr
    std::vector<double> stages{0.25, 0.25, 0.25, 0.25};
    std::vector<bool> stage_status{true, true, true, true};
    double kpv = kDefaultKpv;
    double kqv = kDefaultKqv;
    double kpf = kDefaultFrequencySensitivityPuPerPu / 60.0;  // pu/Hz

    double connected_fraction() const;

    friend bool operator==(Load const&, Load const&) = default;
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;  // MW
    double p_max = 0.0;  // MW
    double droop = 0.05;
    double inertia_h = 0.0;  // s on mva_base
    double mva_base = 0.0;
    bool in_service = true;

    friend bool operator==(Generator const&, Generator const&) = default;
};

/// Immutable grid description. Element ids are dense and 1-based; vectors
/// are stored in id order so that `buses[id - 1].id == id`.
struct Network {
    double s_base = 100.0;  // MVA
    double f0 = 60.0;       // Hz
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Load> loads;
    std::vector<Generator> generators;

    std::size_t bus_count() const { return buses.size(); }
    std::size_t line_count() const { return lines.size(); }

    /// 0-based row of a bus id; throws std::out_of_range if unknown.
    std::size_t bus_index(int bus_id) const;

    friend bool operator==(Network const&, Network const&) = default;
};

/// One broken invariant. `element` reads like "line 7" or "load @bus 39".
struct Violation {
    std::string element;
    std::string rule;

    friend bool operator==(Violation const&, Violation const&) = default;
};

std::vector<Violation> validate(Network const& network);

class CaseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Parses a JSON case document and validates it. Throws CaseError naming
/// the offending element on schema or semantic problems.
Network load_case(std::istream& source);
Network load_case_file(std::string const& path);

/// Writes `network` in the same schema load_case reads.
void save_case(Network const& network, std::ostream& sink);
std::string serialize_case(Network const& network);

/// Per-element availability that changes during a simulation.
struct ServiceState {
    std::vector<bool> bus_energized;
    std::vector<bool> line_in_service;
    std::vector<bool> gen_in_service;
    std::vector<std::vector<bool>> stage_connected;  // per load, per stage

    static ServiceState from_network(Network const& network);

    friend bool operator==(ServiceState const&, ServiceState const&) = default;
};

/// Fraction of a load's feeders currently connected under `status`.
double connected_fraction(Network const& network, ServiceState const& status, std::size_t load);

}  // namespace gridshed
