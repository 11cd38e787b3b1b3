#include "controller_oracle.hpp"

#include <cmath>
#include <limits>

namespace gridshed::testing {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<double> oracle_rates(Network const& net, powerflow::PowerFlowSolution const& sol) {
    std::vector<double> r(net.lines.size(), 0.0);
    for (std::size_t k = 0; k < net.lines.size(); ++k) {
        if (!sol.line_active[k]) continue;
        double const i = sol.i_from_amps[k] > sol.i_to_amps[k] ? sol.i_from_amps[k] : sol.i_to_amps[k];
        r[k] = i / net.lines[k].pickup_current;
    }
    return r;
}

double oracle_remaining(relay::RelayState const& s, double rate, relay::RelayCurve const& c) {
    if (s.tripped) return 0.0;
    if (rate <= 1.0) return kInf;
    double const t = c.alpha / (std::pow(rate, c.gamma) - 1.0) + c.beta;
    return (1.0 - s.travel) * t;
}

std::optional<int> oracle_argmax(std::vector<double> const& row, std::vector<double> const& urgency) {
    int best = -1;
    for (int k = 0; k < static_cast<int>(row.size()); ++k) {
        double const v = row[static_cast<std::size_t>(k)];
        if (v <= 0.0) continue;
        if (best < 0) {
            best = k;
            continue;
        }
        double const bv = row[static_cast<std::size_t>(best)];
        double const u = urgency[static_cast<std::size_t>(k)];
        double const bu = urgency[static_cast<std::size_t>(best)];
        bool better = false;
        if (v > bv) better = true;
        else if (v == bv && u < bu) better = true;
        else if (v == bv && u == bu && k < best) better = true;
        if (better) best = k;
    }
    if (best < 0) return std::nullopt;
    return best;
}

OracleTable oracle_table(Network const& net, powerflow::PowerFlowSolution const& sol,
                         std::vector<double> const& rates, std::vector<relay::RelayState> const& relays,
                         std::vector<bool> const& candidate) {
    std::size_t const n = net.buses.size();
    std::size_t const b = net.lines.size();
    OracleTable t;
    t.if_matrix.assign(n, std::vector<double>(b, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        int const bus = static_cast<int>(i) + 1;
        for (std::size_t k = 0; k < b; ++k) {
            if (!sol.line_active[k]) continue;
            Line const& l = net.lines[k];
            bool const forward = !(sol.p_from[k] / net.s_base < -1e-6);
            int const source = forward ? l.from_bus : l.to_bus;
            int const sink = forward ? l.to_bus : l.from_bus;
            if (bus == sink) t.if_matrix[i][k] = rates[k];
            if (bus == source) t.if_matrix[i][k] = -rates[k];
        }
    }

    std::vector<double> urgency(b);
    for (std::size_t k = 0; k < b; ++k) urgency[k] = oracle_remaining(relays[k], rates[k], net.lines[k].curve);

    t.critical.assign(n, std::nullopt);
    t.assigned.assign(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        if (!candidate[i]) continue;
        t.critical[i] = oracle_argmax(t.if_matrix[i], urgency);
        if (t.critical[i]) t.assigned[i] = urgency[static_cast<std::size_t>(*t.critical[i])];
    }

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i) {
        if (t.critical[i] && t.assigned[i] < kInf) pool.push_back(i);
    }
    // selection sort: smallest time, then larger IF, then lower bus id
    while (!pool.empty()) {
        std::size_t pick = 0;
        for (std::size_t j = 1; j < pool.size(); ++j) {
            std::size_t const a = pool[j];
            std::size_t const c = pool[pick];
            double const ia = t.if_matrix[a][static_cast<std::size_t>(*t.critical[a])];
            double const ic = t.if_matrix[c][static_cast<std::size_t>(*t.critical[c])];
            bool better = false;
            if (t.assigned[a] < t.assigned[c]) better = true;
            else if (t.assigned[a] == t.assigned[c] && ia > ic) better = true;
            else if (t.assigned[a] == t.assigned[c] && ia == ic && a < c) better = true;
            if (better) pick = j;
        }
        t.priority.push_back(static_cast<int>(pool[pick]) + 1);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return t;
}

}  // namespace gridshed::testing
