#include "gridshed/network.hpp"

#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace gridshed {

namespace {

constexpr double kStageSumTolerance = 1e-9;

std::string fmt_double(double v) {
    std::ostringstream out;
    out.precision(12);
    out << v;
    return out.str();
}

std::string line_name(Line const& l) { return "line " + std::to_string(l.id); }
std::string load_name(Load const& l, std::size_t idx) {
    return "load " + std::to_string(idx + 1) + " @bus " + std::to_string(l.bus);
}
std::string gen_name(Generator const& g, std::size_t idx) {
    return "generator " + std::to_string(idx + 1) + " @bus " + std::to_string(g.bus);
}

}  // namespace

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "PV";
        case BusKind::PQ: return "PQ";
    }
    return "?";
}

double Load::connected_fraction() const {
    double sum = 0.0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        if (s < stage_status.size() && stage_status[s]) sum += stages[s];
    }
    return sum;
}

std::size_t Network::bus_index(int bus_id) const {
    if (bus_id < 1 || static_cast<std::size_t>(bus_id) > buses.size() ||
        buses[bus_id - 1].id != bus_id) {
        throw std::out_of_range("unknown bus id " + std::to_string(bus_id));
    }
    return static_cast<std::size_t>(bus_id - 1);
}

std::vector<Violation> validate(Network const& network) {
    std::vector<Violation> out;
    auto add = [&](std::string element, std::string rule) {
        out.push_back({std::move(element), std::move(rule)});
    };

    if (!(network.s_base > 0.0)) add("network", "s_base_mva must be > 0");
    if (!(network.f0 > 0.0)) add("network", "f0_hz must be > 0");
    if (network.buses.empty()) add("network", "no buses");

    std::size_t const n = network.buses.size();
    int slack_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Bus const& bus = network.buses[i];
        std::string const name = "bus " + std::to_string(bus.id);
        if (bus.id != static_cast<int>(i) + 1) {
            add(name, "bus ids must be unique, dense and ordered 1..n (position " +
                          std::to_string(i + 1) + ")");
        }
        if (bus.kind == BusKind::Slack) ++slack_count;
        if (!(bus.base_kv > 0.0)) add(name, "base_kv must be > 0");
        if (bus.kind != BusKind::PQ && !(bus.v_setpoint > 0.0)) add(name, "v_setpoint must be > 0");
    }
    if (!network.buses.empty()) {
        if (slack_count == 0) add("network", "no slack bus");
        if (slack_count > 1) add("network", "multiple slack buses (" + std::to_string(slack_count) + ")");
    }

    auto bus_ok = [&](int id) { return id >= 1 && static_cast<std::size_t>(id) <= n; };

    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        Line const& line = network.lines[k];
        std::string const name = line_name(line);
        if (line.id != static_cast<int>(k) + 1) {
            add(name, "line ids must be unique, dense and ordered 1..b (position " +
                          std::to_string(k + 1) + ")");
        }
        if (!bus_ok(line.from_bus)) add(name, "from_bus " + std::to_string(line.from_bus) + " does not exist");
        if (!bus_ok(line.to_bus)) add(name, "to_bus " + std::to_string(line.to_bus) + " does not exist");
        if (line.from_bus == line.to_bus) add(name, "from_bus equals to_bus");
        if (line.x == 0.0 || !std::isfinite(line.x)) add(name, "x must be nonzero");
        if (!(line.rating_amps > 0.0)) add(name, "rating_amps must be > 0");
        if (!(line.pickup_current > 0.0)) add(name, "pickup_current must be > 0");
        if (auto why = relay::check_curve(line.curve); !why.empty()) add(name, "curve " + why);
    }

    for (std::size_t i = 0; i < network.loads.size(); ++i) {
        Load const& load = network.loads[i];
        std::string const name = load_name(load, i);
        if (!bus_ok(load.bus)) add(name, "bus " + std::to_string(load.bus) + " does not exist");
        if (!(load.p0 >= 0.0)) add(name, "p0 must be >= 0");
        if (load.stages.empty()) add(name, "at least one stage required");
        if (load.stage_status.size() != load.stages.size()) {
            add(name, "stage_status length differs from stages");
        }
        for (double f : load.stages) {
            if (!(f > 0.0)) {
                add(name, "stage fractions must be positive");
                break;
            }
        }
        double const sum = std::accumulate(load.stages.begin(), load.stages.end(), 0.0);
        if (!load.stages.empty() && std::abs(sum - 1.0) > kStageSumTolerance) {
            add(name, "stages sum " + fmt_double(sum) + " != 1");
        }
    }

    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        Generator const& gen = network.generators[g];
        std::string const name = gen_name(gen, g);
        if (!bus_ok(gen.bus)) add(name, "bus " + std::to_string(gen.bus) + " does not exist");
        if (!(gen.p_set >= 0.0 && gen.p_set <= gen.p_max)) add(name, "need 0 <= p_set <= p_max");
        if (!(gen.droop > 0.0)) add(name, "droop must be > 0");
        if (!(gen.inertia_h >= 0.0)) add(name, "inertia_h must be >= 0");
        if (!(gen.mva_base > 0.0)) add(name, "mva_base must be > 0");
    }

    // Base-case connectivity over in-service lines; only meaningful when
    // every reference resolved.
    bool refs_ok = n > 0;
    for (Line const& line : network.lines) {
        refs_ok = refs_ok && bus_ok(line.from_bus) && bus_ok(line.to_bus);
    }
    if (refs_ok) {
        std::vector<std::vector<std::size_t>> adj(n);
        for (Line const& line : network.lines) {
            if (!line.in_service) continue;
            adj[line.from_bus - 1].push_back(line.to_bus - 1);
            adj[line.to_bus - 1].push_back(line.from_bus - 1);
        }
        std::vector<bool> seen(n, false);
        std::queue<std::size_t> frontier;
        frontier.push(0);
        seen[0] = true;
        while (!frontier.empty()) {
            std::size_t const u = frontier.front();
            frontier.pop();
            for (std::size_t v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    frontier.push(v);
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!seen[i]) {
                add("bus " + std::to_string(i + 1), "disconnected from bus 1 in the base topology");
            }
        }
    }

    return out;
}

ServiceState ServiceState::from_network(Network const& network) {
    ServiceState s;
    s.bus_energized.assign(network.buses.size(), true);
    s.line_in_service.reserve(network.lines.size());
    for (Line const& l : network.lines) s.line_in_service.push_back(l.in_service);
    s.gen_in_service.reserve(network.generators.size());
    for (Generator const& g : network.generators) s.gen_in_service.push_back(g.in_service);
    s.stage_connected.reserve(network.loads.size());
    for (Load const& l : network.loads) s.stage_connected.push_back(l.stage_status);
    return s;
}

double connected_fraction(Network const& network, ServiceState const& status, std::size_t load) {
    Load const& l = network.loads[load];
    std::size_t const bus = static_cast<std::size_t>(l.bus - 1);
    if (bus < status.bus_energized.size() && !status.bus_energized[bus]) return 0.0;
    auto const& flags = status.stage_connected[load];
    double sum = 0.0;
    for (std::size_t s = 0; s < l.stages.size() && s < flags.size(); ++s) {
        if (flags[s]) sum += l.stages[s];
    }
    return sum;
}

}  // namespace gridshed
