#include "reference_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridshed::testing {

using C = std::complex<double>;

std::vector<std::vector<C>> reference_ybus(Network const& net) {
    std::size_t const n = net.buses.size();
    std::vector<std::vector<C>> y(n, std::vector<C>(n, C{}));
    for (Line const& l : net.lines) {
        if (!l.in_service) continue;
        auto const f = static_cast<std::size_t>(l.from_bus - 1);
        auto const t = static_cast<std::size_t>(l.to_bus - 1);
        C const ys = 1.0 / C(l.r, l.x);
        C const ysh(0.0, l.b_shunt / 2.0);
        y[f][f] += ys + ysh;
        y[t][t] += ys + ysh;
        y[f][t] -= ys;
        y[t][f] -= ys;
    }
    return y;
}

std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    std::size_t const n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        }
        if (std::abs(a[piv][c]) < 1e-14) throw std::runtime_error("singular matrix");
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            double const m = a[r][c] / a[c][c];
            if (m == 0.0) continue;
            for (std::size_t k = c; k < n; ++k) a[r][k] -= m * a[c][k];
            b[r] -= m * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

namespace {

struct Problem {
    std::size_t n = 0;
    std::size_t slack = 0;
    std::vector<int> kind;  // 0 slack, 1 PV, 2 PQ
    std::vector<double> vset, pg, p0, q0;
    std::vector<std::vector<std::pair<std::size_t, Load const*>>> loads;
    std::vector<std::vector<C>> y;
};

Problem setup(Network const& net) {
    Problem p;
    p.n = net.buses.size();
    p.kind.assign(p.n, 2);
    p.vset.assign(p.n, 1.0);
    p.pg.assign(p.n, 0.0);
    p.loads.resize(p.n);
    std::vector<bool> has_gen(p.n, false);
    for (Generator const& g : net.generators) {
        if (!g.in_service) continue;
        auto const i = static_cast<std::size_t>(g.bus - 1);
        has_gen[i] = true;
        p.pg[i] += g.p_set / net.s_base;
    }
    for (Bus const& b : net.buses) {
        auto const i = static_cast<std::size_t>(b.id - 1);
        p.vset[i] = b.v_setpoint;
        if (b.kind == BusKind::Slack) {
            p.kind[i] = 0;
            p.slack = i;
        } else if (b.kind == BusKind::PV && has_gen[i]) {
            p.kind[i] = 1;
        }
    }
    for (std::size_t l = 0; l < net.loads.size(); ++l) {
        p.loads[static_cast<std::size_t>(net.loads[l].bus - 1)].push_back({l, &net.loads[l]});
    }
    p.y = reference_ybus(net);
    return p;
}

// Residuals for unknowns x = [e_i, f_i for every non-slack bus]:
// P mismatch for PV and PQ buses, Q mismatch for PQ, |V|^2 - vset^2 for PV.
std::vector<double> residual(Network const& net, Problem const& p, std::vector<double> const& x) {
    std::vector<C> v(p.n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
        if (i == p.slack) {
            v[i] = C(p.vset[i], 0.0);
        } else {
            v[i] = C(x[k], x[k + 1]);
            k += 2;
        }
    }
    std::vector<double> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < p.n; ++i) {
        if (i == p.slack) continue;
        C current{};
        for (std::size_t j = 0; j < p.n; ++j) current += p.y[i][j] * v[j];
        C const s = v[i] * std::conj(current);
        double const vm = std::abs(v[i]);
        double pd = 0.0, qd = 0.0;
        for (auto const& [idx, ld] : p.loads[i]) {
            (void)idx;
            double frac = 0.0;
            for (std::size_t st = 0; st < ld->stages.size(); ++st) {
                if (ld->stage_status[st]) frac += ld->stages[st];
            }
            pd += ld->p0 * frac * std::pow(vm, ld->kpv) / net.s_base;
            qd += ld->q0 * frac * std::pow(vm, ld->kqv) / net.s_base;
        }
        out.push_back(s.real() - (p.pg[i] - pd));
        if (p.kind[i] == 1) {
            out.push_back(vm * vm - p.vset[i] * p.vset[i]);
        } else {
            out.push_back(s.imag() + qd);
        }
    }
    return out;
}

double max_abs(std::vector<double> const& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

ReferenceResult reference_solve(Network const& net, double tol, int max_iter) {
    Problem const p = setup(net);
    std::vector<double> x;
    for (std::size_t i = 0; i < p.n; ++i) {
        if (i == p.slack) continue;
        x.push_back(p.kind[i] == 1 ? p.vset[i] : 1.0);
        x.push_back(0.0);
    }
    ReferenceResult res;
    std::vector<double> f = residual(net, p, x);
    double const h = 1e-7;
    for (int it = 0; it < max_iter && max_abs(f) > tol; ++it) {
        std::size_t const m = x.size();
        std::vector<std::vector<double>> jac(m, std::vector<double>(m));
        for (std::size_t c = 0; c < m; ++c) {
            std::vector<double> xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            auto const fp = residual(net, p, xp);
            auto const fm = residual(net, p, xm);
            for (std::size_t r = 0; r < m; ++r) jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
        }
        std::vector<double> rhs(f.size());
        for (std::size_t r = 0; r < f.size(); ++r) rhs[r] = -f[r];
        auto const dx = dense_solve(std::move(jac), rhs);
        for (std::size_t c = 0; c < m; ++c) x[c] += dx[c];
        f = residual(net, p, x);
        res.iterations = it + 1;
    }
    res.max_mismatch = max_abs(f);
    res.converged = res.max_mismatch <= tol;
    res.v_mag.assign(p.n, 0.0);
    res.v_ang.assign(p.n, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < p.n; ++i) {
        if (i == p.slack) {
            res.v_mag[i] = p.vset[i];
            continue;
        }
        C const v(x[k], x[k + 1]);
        k += 2;
        res.v_mag[i] = std::abs(v);
        res.v_ang[i] = std::arg(v);
    }
    return res;
}

EndCurrents reference_currents(Network const& net, std::vector<double> const& v_mag,
                               std::vector<double> const& v_ang) {
    EndCurrents out;
    for (Line const& l : net.lines) {
        auto const f = static_cast<std::size_t>(l.from_bus - 1);
        auto const t = static_cast<std::size_t>(l.to_bus - 1);
        C const vf = std::polar(v_mag[f], v_ang[f]);
        C const vt = std::polar(v_mag[t], v_ang[t]);
        C const ys = 1.0 / C(l.r, l.x);
        C const ysh(0.0, l.b_shunt / 2.0);
        C const i_f = (vf - vt) * ys + vf * ysh;
        C const i_t = (vt - vf) * ys + vt * ysh;
        auto base = [&](std::size_t bus) {
            return net.s_base * 1e3 / (std::sqrt(3.0) * net.buses[bus].base_kv);
        };
        out.from_amps.push_back(std::abs(i_f) * base(f));
        out.to_amps.push_back(std::abs(i_t) * base(t));
    }
    return out;
}

}  // namespace gridshed::testing
