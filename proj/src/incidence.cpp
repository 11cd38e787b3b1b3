#include "gridshed/incidence.hpp"

#include <cmath>

namespace gridshed {

OrientedIncidence build_incidence(Network const& network, powerflow::PowerFlowSolution const& flows,
                                  double valid_at) {
    OrientedIncidence a(network.buses.size(), network.lines.size(), valid_at);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        if (k >= flows.line_active.size() || !flows.line_active[k]) continue;
        Line const& line = network.lines[k];
        double const p_pu = flows.p_from[k] / network.s_base;
        bool const reversed = p_pu < -kFlowDirectionDeadband;
        std::size_t const src = static_cast<std::size_t>((reversed ? line.to_bus : line.from_bus) - 1);
        std::size_t const dst = static_cast<std::size_t>((reversed ? line.from_bus : line.to_bus) - 1);
        a.set(src, k, -1);
        a.set(dst, k, +1);
    }
    return a;
}

}  // namespace gridshed
