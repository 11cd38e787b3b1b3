#include "gridshed/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include <Eigen/SparseLU>

namespace gridshed::powerflow {

using Complex = std::complex<double>;

namespace {

int find_slack(Network const& network, OperatingPoint const& op) {
    if (op.slack_bus != 0) return op.slack_bus - 1;
    for (Bus const& b : network.buses) {
        if (b.kind == BusKind::Slack) return b.id - 1;
    }
    return -1;
}

std::vector<bool> resolve_active(Network const& network, OperatingPoint const& op) {
    std::size_t const n = network.buses.size();
    std::vector<bool> active(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < op.status.bus_energized.size() && !op.status.bus_energized[i]) active[i] = false;
        if (!op.active_buses.empty() && !op.active_buses[i]) active[i] = false;
    }
    return active;
}

}  // namespace

double base_current_amps(double s_base_mva, double base_kv) {
    return s_base_mva * 1e3 / (std::sqrt(3.0) * base_kv);
}

OperatingPoint OperatingPoint::base_case(Network const& network) {
    OperatingPoint op;
    op.status = ServiceState::from_network(network);
    op.gen_mw.reserve(network.generators.size());
    for (Generator const& g : network.generators) op.gen_mw.push_back(g.p_set);
    return op;
}

std::pair<double, double> effective_load(Load const& load, double connected_fraction, double v,
                                         double df_hz) {
    double const p = load.p0 * connected_fraction * std::pow(v, load.kpv) * (1.0 + load.kpf * df_hz);
    double const q = load.q0 * connected_fraction * std::pow(v, load.kqv);
    return {p, q};
}

std::pair<double, double> effective_load(Load const& load, double v, double df_hz) {
    return effective_load(load, load.connected_fraction(), v, df_hz);
}

Eigen::SparseMatrix<Complex> build_ybus(Network const& network, std::vector<bool> const& line_on,
                                        std::vector<bool> const& bus_active) {
    auto const n = static_cast<Eigen::Index>(network.buses.size());
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(network.lines.size() * 4);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        Line const& l = network.lines[k];
        int const f = l.from_bus - 1;
        int const t = l.to_bus - 1;
        if (!line_on[k] || !bus_active[f] || !bus_active[t]) continue;
        Complex const y = 1.0 / Complex(l.r, l.x);
        Complex const ysh(0.0, l.b_shunt / 2.0);
        trip.emplace_back(f, f, y + ysh);
        trip.emplace_back(t, t, y + ysh);
        trip.emplace_back(f, t, -y);
        trip.emplace_back(t, f, -y);
    }
    Eigen::SparseMatrix<Complex> y(n, n);
    y.setFromTriplets(trip.begin(), trip.end());
    y.makeCompressed();
    return y;
}

MismatchModel::MismatchModel(Network const& network, OperatingPoint const& op)
    : net_(network), df_(op.df_hz) {
    std::size_t const n = network.buses.size();
    active_ = resolve_active(network, op);
    slack_ = find_slack(network, op);
    if (slack_ < 0 || static_cast<std::size_t>(slack_) >= n) {
        throw std::invalid_argument("power flow: no slack bus");
    }
    if (!active_[slack_]) throw std::invalid_argument("power flow: slack bus is not in the solved set");

    line_on_.assign(network.lines.size(), false);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        Line const& l = network.lines[k];
        bool on = k < op.status.line_in_service.size() ? op.status.line_in_service[k] : l.in_service;
        line_on_[k] = on && active_[l.from_bus - 1] && active_[l.to_bus - 1];
    }

    load_fraction_.resize(network.loads.size());
    for (std::size_t i = 0; i < network.loads.size(); ++i) {
        load_fraction_[i] = active_[network.loads[i].bus - 1] ? connected_fraction(network, op.status, i) : 0.0;
    }

    std::vector<bool> has_gen(n, false);
    pg_.assign(n, 0.0);
    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        Generator const& gen = network.generators[g];
        bool on = g < op.status.gen_in_service.size() ? op.status.gen_in_service[g] : gen.in_service;
        if (!on) continue;
        int const b = gen.bus - 1;
        has_gen[b] = true;
        double const mw = g < op.gen_mw.size() ? op.gen_mw[g] : gen.p_set;
        pg_[b] += mw / network.s_base;
    }

    kind_.assign(n, -1);
    vset_.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!active_[i]) continue;
        Bus const& bus = network.buses[i];
        if (static_cast<int>(i) == slack_) {
            kind_[i] = 0;
            vset_[i] = bus.kind == BusKind::PQ ? 1.0 : bus.v_setpoint;
        } else if (bus.kind != BusKind::PQ && has_gen[i]) {
            kind_[i] = 1;
            vset_[i] = bus.v_setpoint;
        } else {
            kind_[i] = 2;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (kind_[i] == 1 || kind_[i] == 2) pvpq_.push_back(static_cast<int>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (kind_[i] == 2) pq_.push_back(static_cast<int>(i));
    }
    ybus_ = build_ybus(network, line_on_, active_);
}

void MismatchModel::bus_demand(std::vector<double> const& vm, std::vector<double>& pd,
                               std::vector<double>& qd, std::vector<double>* dpd_dv,
                               std::vector<double>* dqd_dv) const {
    std::size_t const n = net_.buses.size();
    pd.assign(n, 0.0);
    qd.assign(n, 0.0);
    if (dpd_dv) dpd_dv->assign(n, 0.0);
    if (dqd_dv) dqd_dv->assign(n, 0.0);
    for (std::size_t i = 0; i < net_.loads.size(); ++i) {
        Load const& load = net_.loads[i];
        int const b = load.bus - 1;
        if (!active_[b] || load_fraction_[i] == 0.0) continue;
        double const v = vm[b];
        auto [p, q] = effective_load(load, load_fraction_[i], v, df_);
        pd[b] += p / net_.s_base;
        qd[b] += q / net_.s_base;
        if (dpd_dv && v > 0.0) (*dpd_dv)[b] += load.kpv * p / (v * net_.s_base);
        if (dqd_dv && v > 0.0) (*dqd_dv)[b] += load.kqv * q / (v * net_.s_base);
    }
}

void MismatchModel::injections(std::vector<double> const& vm, std::vector<double> const& va,
                               std::vector<double>& p, std::vector<double>& q) const {
    std::size_t const n = net_.buses.size();
    p.assign(n, 0.0);
    q.assign(n, 0.0);
    // Y is symmetric, so column i lists the entries of row i.
    for (Eigen::Index i = 0; i < ybus_.outerSize(); ++i) {
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(ybus_, i); it; ++it) {
            auto const j = it.row();
            double const g = it.value().real();
            double const b = it.value().imag();
            double const th = va[i] - va[j];
            p[i] += vm[i] * vm[j] * (g * std::cos(th) + b * std::sin(th));
            q[i] += vm[i] * vm[j] * (g * std::sin(th) - b * std::cos(th));
        }
    }
}

Eigen::VectorXd MismatchModel::mismatch(std::vector<double> const& vm, std::vector<double> const& va) const {
    std::vector<double> p, q, pd, qd;
    injections(vm, va, p, q);
    bus_demand(vm, pd, qd);
    Eigen::VectorXd f(static_cast<Eigen::Index>(unknowns()));
    Eigen::Index r = 0;
    for (int i : pvpq_) f[r++] = p[i] - (pg_[i] - pd[i]);
    for (int i : pq_) f[r++] = q[i] + qd[i];
    return f;
}

double MismatchModel::max_mismatch(std::vector<double> const& vm, std::vector<double> const& va) const {
    Eigen::VectorXd const f = mismatch(vm, va);
    return f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
}

Eigen::SparseMatrix<double> MismatchModel::jacobian(std::vector<double> const& vm,
                                                    std::vector<double> const& va) const {
    std::size_t const n = net_.buses.size();
    std::vector<int> ang(n, -1), mag(n, -1);
    for (std::size_t r = 0; r < pvpq_.size(); ++r) ang[pvpq_[r]] = static_cast<int>(r);
    for (std::size_t r = 0; r < pq_.size(); ++r) mag[pq_[r]] = static_cast<int>(pvpq_.size() + r);

    std::vector<double> p, q, pd, qd, dpd, dqd;
    injections(vm, va, p, q);
    bus_demand(vm, pd, qd, &dpd, &dqd);

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(ybus_.nonZeros() * 4);
    for (Eigen::Index i = 0; i < ybus_.outerSize(); ++i) {
        int const pi = ang[i];   // row of dP_i
        int const qi = mag[i];   // row of dQ_i (PQ only)
        if (pi < 0) continue;    // slack rows absent
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(ybus_, i); it; ++it) {
            auto const j = it.row();
            double const g = it.value().real();
            double const b = it.value().imag();
            if (j == i) {
                double const vi = vm[i];
                trip.emplace_back(pi, pi, -q[i] - b * vi * vi);
                if (qi >= 0) {
                    trip.emplace_back(pi, qi, p[i] / vi + g * vi + dpd[i]);
                    trip.emplace_back(qi, pi, p[i] - g * vi * vi);
                    trip.emplace_back(qi, qi, q[i] / vi - b * vi + dqd[i]);
                }
                continue;
            }
            double const th = va[i] - va[j];
            double const c = std::cos(th);
            double const s = std::sin(th);
            int const aj = ang[j];
            int const mj = mag[j];
            if (aj >= 0) {
                trip.emplace_back(pi, aj, vm[i] * vm[j] * (g * s - b * c));
                if (qi >= 0) trip.emplace_back(qi, aj, -vm[i] * vm[j] * (g * c + b * s));
            }
            if (mj >= 0) {
                trip.emplace_back(pi, mj, vm[i] * (g * c + b * s));
                if (qi >= 0) trip.emplace_back(qi, mj, vm[i] * (g * s - b * c));
            }
        }
    }
    auto const dim = static_cast<Eigen::Index>(unknowns());
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    return jac;
}

PowerFlowSolution solve_ac(Network const& network, OperatingPoint const& op, SolverConfig const& config,
                           PowerFlowSolution const* warm_start) {
    std::size_t const n = network.buses.size();
    std::size_t const b = network.lines.size();
    PowerFlowSolution sol;
    sol.v_mag.assign(n, 0.0);
    sol.v_ang.assign(n, 0.0);
    for (auto* v : {&sol.p_from, &sol.q_from, &sol.p_to, &sol.q_to, &sol.i_from_amps, &sol.i_to_amps,
                    &sol.i_line, &sol.i_line_amps}) {
        v->assign(b, 0.0);
    }
    sol.line_active.assign(b, false);
    sol.p_gen_bus.assign(n, 0.0);
    sol.q_gen_bus.assign(n, 0.0);
    sol.p_load_bus.assign(n, 0.0);
    sol.q_load_bus.assign(n, 0.0);
    sol.p_load.assign(network.loads.size(), 0.0);

    MismatchModel const model(network, op);
    sol.bus_active = model.bus_active();
    sol.slack_bus = model.slack() + 1;

    std::vector<double> vm(n, 0.0), va(n, 0.0);
    bool const warm = !config.flat_start && warm_start != nullptr && warm_start->v_mag.size() == n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!sol.bus_active[i]) continue;
        if (warm && warm_start->v_mag[i] > 0.0) {
            vm[i] = warm_start->v_mag[i];
            va[i] = warm_start->v_ang[i];
        } else {
            vm[i] = 1.0;
            va[i] = warm && warm_start->v_mag[model.slack()] > 0.0 ? warm_start->v_ang[model.slack()] : 0.0;
        }
        if (static_cast<int>(i) == model.slack() || model.is_pv(static_cast<int>(i))) {
            vm[i] = model.setpoint(static_cast<int>(i));
        }
    }

    auto const& pvpq = model.angle_buses();
    auto const& pq = model.magnitude_buses();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool pattern_ready = false;

    Eigen::VectorXd f = model.mismatch(vm, va);
    double err = f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
    if (config.record_history) sol.mismatch_history.push_back(err);
    int iter = 0;
    while (!(err <= config.tol) && iter < config.max_iter) {
        if (!std::isfinite(err)) {
            sol.failure = "mismatch is not finite";
            break;
        }
        Eigen::SparseMatrix<double> const jac = model.jacobian(vm, va);
        if (!pattern_ready) {
            lu.analyzePattern(jac);
            pattern_ready = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            sol.failure = "singular Jacobian at iteration " + std::to_string(iter + 1);
            break;
        }
        Eigen::VectorXd const dx = lu.solve(-f);
        ++iter;
        for (std::size_t r = 0; r < pvpq.size(); ++r) va[pvpq[r]] += dx[static_cast<Eigen::Index>(r)];
        bool collapsed = false;
        for (std::size_t r = 0; r < pq.size(); ++r) {
            vm[pq[r]] += dx[static_cast<Eigen::Index>(pvpq.size() + r)];
            if (!(vm[pq[r]] > 0.0)) collapsed = true;
        }
        if (collapsed) {
            sol.failure = "voltage collapse: nonpositive magnitude at iteration " + std::to_string(iter);
            break;
        }
        f = model.mismatch(vm, va);
        err = f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff();
        if (config.record_history) sol.mismatch_history.push_back(err);
    }
    sol.iterations = iter;
    sol.max_mismatch = err;
    sol.converged = sol.failure.empty() && err <= config.tol;
    if (!sol.converged && sol.failure.empty()) {
        sol.failure = "no convergence after " + std::to_string(iter) + " iterations (mismatch " +
                      std::to_string(err) + " pu)";
    }
    sol.v_mag = vm;
    sol.v_ang = va;
    if (!sol.converged) return sol;

    double const sb = network.s_base;
    std::vector<double> pd, qd;
    model.bus_demand(vm, pd, qd);

    std::vector<Complex> volt(n);
    for (std::size_t i = 0; i < n; ++i) volt[i] = std::polar(vm[i], va[i]);

    // Injections from the admittance matrix give generation at slack/PV buses.
    Eigen::SparseMatrix<Complex> const& y = model.ybus();
    std::vector<Complex> inj(n, Complex(0.0, 0.0));
    for (Eigen::Index j = 0; j < y.outerSize(); ++j) {
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(y, j); it; ++it) {
            inj[it.row()] += it.value() * volt[j];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!sol.bus_active[i]) continue;
        Complex const s = volt[i] * std::conj(inj[i]);
        sol.p_load_bus[i] = pd[i] * sb;
        sol.q_load_bus[i] = qd[i] * sb;
        bool const slack = static_cast<int>(i) == model.slack();
        sol.p_gen_bus[i] = slack ? (s.real() + pd[i]) * sb : model.p_gen()[i] * sb;
        if (slack || model.is_pv(static_cast<int>(i))) sol.q_gen_bus[i] = (s.imag() + qd[i]) * sb;
    }
    sol.p_slack = sol.p_gen_bus[model.slack()];

    for (std::size_t l = 0; l < network.loads.size(); ++l) {
        Load const& load = network.loads[l];
        std::size_t const bi = static_cast<std::size_t>(load.bus - 1);
        if (!sol.bus_active[bi]) continue;
        sol.p_load[l] = effective_load(load, connected_fraction(network, op.status, l), vm[bi], op.df_hz).first;
    }

    for (std::size_t k = 0; k < b; ++k) {
        if (!model.line_on()[k]) continue;
        Line const& l = network.lines[k];
        std::size_t const f_bus = static_cast<std::size_t>(l.from_bus - 1);
        std::size_t const t_bus = static_cast<std::size_t>(l.to_bus - 1);
        Complex const ys = 1.0 / Complex(l.r, l.x);
        Complex const ysh(0.0, l.b_shunt / 2.0);
        Complex const i_f = (volt[f_bus] - volt[t_bus]) * ys + ysh * volt[f_bus];
        Complex const i_t = (volt[t_bus] - volt[f_bus]) * ys + ysh * volt[t_bus];
        Complex const s_f = volt[f_bus] * std::conj(i_f);
        Complex const s_t = volt[t_bus] * std::conj(i_t);
        sol.line_active[k] = true;
        sol.p_from[k] = s_f.real() * sb;
        sol.q_from[k] = s_f.imag() * sb;
        sol.p_to[k] = s_t.real() * sb;
        sol.q_to[k] = s_t.imag() * sb;
        sol.i_from_amps[k] = std::abs(i_f) * base_current_amps(sb, network.buses[f_bus].base_kv);
        sol.i_to_amps[k] = std::abs(i_t) * base_current_amps(sb, network.buses[t_bus].base_kv);
        sol.i_line_amps[k] = std::max(sol.i_from_amps[k], sol.i_to_amps[k]);
        sol.i_line[k] = sol.i_line_amps[k] / l.rating_amps;
    }
    return sol;
}

double line_current(PowerFlowSolution const& solution, int line_id) {
    if (line_id < 1 || static_cast<std::size_t>(line_id) > solution.line_active.size()) {
        throw std::invalid_argument("unknown line id " + std::to_string(line_id));
    }
    if (!solution.line_active[line_id - 1]) {
        throw std::invalid_argument("line " + std::to_string(line_id) + " is out of service");
    }
    return solution.i_line[line_id - 1];
}

Network calibrate_ratings(Network network, PowerFlowSolution const& solution, double target) {
    if (!solution.converged) throw std::invalid_argument("calibrate_ratings needs a converged solution");
    if (!(target > 0.0)) throw std::invalid_argument("calibration target must be > 0");
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        Line& l = network.lines[k];
        if (!solution.line_active[k]) continue;
        if (!(solution.i_line_amps[k] > 0.0)) {
            throw std::invalid_argument("line " + std::to_string(l.id) + " carries no current");
        }
        l.rating_amps = solution.i_line_amps[k] / target;
        l.pickup_current = l.rating_amps;
    }
    double slack_remaining = solution.p_slack;
    std::vector<std::size_t> at_slack;
    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        Generator const& gen = network.generators[g];
        if (gen.bus == solution.slack_bus && gen.in_service) at_slack.push_back(g);
    }
    for (std::size_t i = 0; i < at_slack.size(); ++i) {
        Generator& gen = network.generators[at_slack[i]];
        if (i + 1 == at_slack.size()) {
            gen.p_set = slack_remaining;
        } else {
            slack_remaining -= gen.p_set;
        }
    }
    return network;
}

}  // namespace gridshed::powerflow
