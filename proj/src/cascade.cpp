#include "gridshed/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gridshed/incidence.hpp"

namespace gridshed::sim {

using nlohmann::json;
using powerflow::PowerFlowSolution;

namespace {

constexpr double kTimeEps = 1e-9;

double number_or(json const& obj, char const* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) throw ScenarioError(std::string("scenario: '") + key + "' must be a number");
    return obj.at(key).get<double>();
}

ElementKind parse_element(std::string const& s) {
    if (s == "generator") return ElementKind::Generator;
    if (s == "line") return ElementKind::Line;
    if (s == "load") return ElementKind::Load;
    throw ScenarioError("scenario: unknown event kind '" + s + "' (expected generator, line or load)");
}

std::string element_name(ElementKind kind) {
    switch (kind) {
        case ElementKind::Generator: return "generator";
        case ElementKind::Line: return "line";
        case ElementKind::Load: return "load";
    }
    return "?";
}

std::string bus_list(std::vector<int> const& buses) {
    std::string s;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(buses[i]);
    }
    return s;
}

std::string rate_text(double r) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "rate %.4g", r);
    return buf;
}

struct DisjointSet {
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<std::size_t> parent;
};

}  // namespace

// ---------------------------------------------------------------------------
// Scenario files

Scenario load_scenario(std::istream& source, std::string const& base_dir) {
    json doc;
    try {
        doc = json::parse(source);
    } catch (json::parse_error const& e) {
        throw ScenarioError(std::string("scenario: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ScenarioError("scenario: top level must be an object");
    if (!doc.contains("case") || !doc.at("case").is_string()) {
        throw ScenarioError("scenario: missing string field 'case'");
    }

    Scenario sc;
    std::filesystem::path case_path = doc.at("case").get<std::string>();
    if (case_path.is_relative()) case_path = std::filesystem::path(base_dir) / case_path;
    sc.case_path = case_path.lexically_normal().string();
    sc.t_end = number_or(doc, "t_end", sc.t_end);
    sc.dt = number_or(doc, "dt", sc.dt);

    if (doc.contains("events")) {
        json const& evs = doc.at("events");
        if (!evs.is_array()) throw ScenarioError("scenario: 'events' must be an array");
        for (std::size_t i = 0; i < evs.size(); ++i) {
            json const& e = evs[i];
            std::string const where = "scenario: events[" + std::to_string(i) + "]";
            if (!e.is_object() || !e.contains("t") || !e.contains("kind") || !e.contains("target")) {
                throw ScenarioError(where + " needs t, kind and target");
            }
            if (!e.at("t").is_number() || !e.at("kind").is_string() || !e.at("target").is_number_integer()) {
                throw ScenarioError(where + " has a field of the wrong type");
            }
            sc.events.push_back({e.at("t").get<double>(), parse_element(e.at("kind").get<std::string>()),
                                 e.at("target").get<int>()});
        }
    }
    std::stable_sort(sc.events.begin(), sc.events.end(),
                     [](ScheduledEvent const& a, ScheduledEvent const& b) { return a.t < b.t; });

    if (doc.contains("controller")) {
        json const& c = doc.at("controller");
        if (!c.is_object()) throw ScenarioError("scenario: 'controller' must be an object");
        if (c.contains("enabled")) {
            if (!c.at("enabled").is_boolean()) throw ScenarioError("scenario: 'enabled' must be a boolean");
            sc.controller.enabled = c.at("enabled").get<bool>();
        }
        sc.controller.trigger_rate = number_or(c, "trigger_rate", sc.controller.trigger_rate);
        sc.controller.safety_margin_s = number_or(c, "safety_margin_s", sc.controller.safety_margin_s);
        sc.controller.control_interval_s = number_or(c, "control_interval_s", sc.controller.control_interval_s);
    }
    if (doc.contains("frequency")) {
        json const& f = doc.at("frequency");
        if (!f.is_object()) throw ScenarioError("scenario: 'frequency' must be an object");
        sc.frequency.damping = number_or(f, "damping", sc.frequency.damping);
        if (f.contains("h_rule") && f.at("h_rule") != "capacity_weighted") {
            throw ScenarioError("scenario: only h_rule \"capacity_weighted\" is supported");
        }
    }
    if (doc.contains("relay")) {
        json const& r = doc.at("relay");
        if (!r.is_object()) throw ScenarioError("scenario: 'relay' must be an object");
        sc.relay.reset_time = number_or(r, "reset_time_s", sc.relay.reset_time);
    }

    if (!(sc.dt > 0.0)) throw ScenarioError("scenario: dt must be > 0");
    if (!(sc.t_end > 0.0)) throw ScenarioError("scenario: t_end must be > 0");
    if (!(sc.controller.control_interval_s > 0.0)) throw ScenarioError("scenario: control_interval_s must be > 0");
    if (!(sc.relay.reset_time >= 0.0)) throw ScenarioError("scenario: reset_time_s must be >= 0");
    for (auto const& e : sc.events) {
        if (e.t < 0.0 || e.t > sc.t_end) throw ScenarioError("scenario: event time outside [0, t_end]");
    }
    return sc;
}

Scenario load_scenario_file(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    return load_scenario(in, std::filesystem::path(path).parent_path().string());
}

void check_scenario(Scenario const& scenario, Network const& network) {
    for (auto const& e : scenario.events) {
        bool ok = false;
        switch (e.kind) {
            case ElementKind::Generator:
                ok = e.target >= 1 && static_cast<std::size_t>(e.target) <= network.generators.size();
                break;
            case ElementKind::Line:
                ok = e.target >= 1 && static_cast<std::size_t>(e.target) <= network.lines.size();
                break;
            case ElementKind::Load:
                ok = std::any_of(network.loads.begin(), network.loads.end(),
                                 [&](Load const& l) { return l.bus == e.target; });
                break;
        }
        if (!ok) {
            throw ScenarioError("scenario: " + element_name(e.kind) + " target " + std::to_string(e.target) +
                                " does not exist in the case");
        }
    }
}

// ---------------------------------------------------------------------------
// Event log

std::string to_string(RecordKind kind) {
    switch (kind) {
        case RecordKind::Contingency: return "applied-contingency";
        case RecordKind::RelayTrip: return "relay-trip";
        case RecordKind::Shed: return "shed-command";
        case RecordKind::IslandBlackout: return "island-blackout";
        case RecordKind::ControllerExhausted: return "controller-exhausted";
        case RecordKind::SolverFailure: return "solver-failure";
    }
    return "?";
}

std::size_t EventLog::count(RecordKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](LogRecord const& r) { return r.kind == kind; }));
}

void write_event_log(EventLog const& log, std::ostream& sink) {
    for (auto const& r : log.records) {
        json j;
        j["t"] = r.t;
        j["kind"] = to_string(r.kind);
        j["subject"] = r.subject;
        j["cause"] = r.cause;
        sink << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Topology and frequency

std::vector<Island> detect_islands(Network const& network, ServiceState const& status) {
    std::size_t const n = network.buses.size();
    DisjointSet dsu(n);
    for (std::size_t k = 0; k < network.lines.size(); ++k) {
        if (!status.line_in_service[k]) continue;
        auto const f = static_cast<std::size_t>(network.lines[k].from_bus - 1);
        auto const t = static_cast<std::size_t>(network.lines[k].to_bus - 1);
        if (status.bus_energized[f] && status.bus_energized[t]) dsu.unite(f, t);
    }
    std::vector<int> slot(n, -1);
    std::vector<Island> islands;
    for (std::size_t i = 0; i < n; ++i) {
        if (!status.bus_energized[i]) continue;
        std::size_t const root = dsu.find(i);
        if (slot[root] < 0) {
            slot[root] = static_cast<int>(islands.size());
            islands.emplace_back();
        }
        islands[static_cast<std::size_t>(slot[root])].buses.push_back(static_cast<int>(i) + 1);
    }
    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        auto const b = static_cast<std::size_t>(network.generators[g].bus - 1);
        if (!status.gen_in_service[g] || !status.bus_energized[b]) continue;
        islands[static_cast<std::size_t>(slot[dsu.find(b)])].gen_capacity_mw += network.generators[g].p_max;
    }
    for (std::size_t l = 0; l < network.loads.size(); ++l) {
        auto const b = static_cast<std::size_t>(network.loads[l].bus - 1);
        if (!status.bus_energized[b]) continue;
        islands[static_cast<std::size_t>(slot[dsu.find(b)])].load_mw +=
            network.loads[l].p0 * connected_fraction(network, status, l);
    }
    return islands;
}

std::vector<double> redistribute_droop(Network const& network, ServiceState const& status,
                                       std::span<const double> p_ref, double df) {
    std::vector<double> out(network.generators.size(), 0.0);
    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        if (!status.gen_in_service[g]) continue;
        Generator const& gen = network.generators[g];
        double const pickup = -(1.0 / gen.droop) * (df / network.f0) * gen.mva_base;
        double const headroom = std::max(0.0, gen.p_max - p_ref[g]);
        out[g] = p_ref[g] + std::clamp(pickup, 0.0, headroom);
    }
    return out;
}

FrequencyModel coi_model(Network const& network, ServiceState const& status, double damping) {
    FrequencyModel m;
    m.f0 = network.f0;
    m.damping = damping;
    double weighted = 0.0;
    for (std::size_t g = 0; g < network.generators.size(); ++g) {
        if (!status.gen_in_service[g]) continue;
        auto const b = static_cast<std::size_t>(network.generators[g].bus - 1);
        if (!status.bus_energized[b]) continue;
        m.s_sys += network.generators[g].mva_base;
        weighted += network.generators[g].inertia_h * network.generators[g].mva_base;
    }
    m.h_sys = m.s_sys > 0.0 ? weighted / m.s_sys : 0.0;
    return m;
}

double step_frequency(double df, double imbalance_mw, FrequencyModel const& model, double dt) {
    if (!(model.h_sys > 0.0) || !(model.s_sys > 0.0)) {
        throw std::invalid_argument("step_frequency: system inertia and MVA must be positive");
    }
    double const accel = imbalance_mw - model.damping * model.s_sys * df / model.f0;
    return df + dt * accel * model.f0 / (2.0 * model.h_sys * model.s_sys);
}

// ---------------------------------------------------------------------------
// Engine

namespace {

class Engine {
  public:
    Engine(Network const& network, Scenario const& scenario, RunOptions const& options)
        : net_(network), sc_(scenario), opt_(options) {}

    RunResult run();

  private:
    void solve_all(double t, bool flat);
    void blackout(Island const& island, double t, std::string const& cause);
    void apply_event(ScheduledEvent const& e);
    void control(double t);
    void record(double t);
    void log(double t, RecordKind kind, std::string subject, std::string cause) {
        pending_.push_back({t, kind, std::move(subject), std::move(cause)});
    }
    void flush_log() {
        std::stable_sort(pending_.begin(), pending_.end(),
                         [](LogRecord const& a, LogRecord const& b) { return a.t < b.t; });
        for (auto& r : pending_) result_.log.records.push_back(std::move(r));
        pending_.clear();
    }
    bool any_energized() const {
        return std::any_of(state_.status.bus_energized.begin(), state_.status.bus_energized.end(),
                           [](bool b) { return b; });
    }

    Network const& net_;
    Scenario const& sc_;
    RunOptions const& opt_;
    SystemState state_;
    RunResult result_;
    std::vector<LogRecord> pending_;
    std::vector<double> mechanical_;  // governor output used in the last solve
    std::vector<double> rates_;
    bool exhausted_logged_ = false;
};

void Engine::blackout(Island const& island, double t, std::string const& cause) {
    for (int b : island.buses) state_.status.bus_energized[static_cast<std::size_t>(b - 1)] = false;
    result_.blackout = true;
    log(t, RecordKind::IslandBlackout, "buses " + bus_list(island.buses), cause);
}

void Engine::solve_all(double t, bool flat) {
    std::size_t const n = net_.buses.size();
    std::size_t const b = net_.lines.size();
    PowerFlowSolution const previous = state_.solution;
    bool const have_previous = previous.v_mag.size() == n;

    mechanical_ = redistribute_droop(net_, state_.status, state_.p_ref, state_.df);

    PowerFlowSolution merged;
    merged.v_mag.assign(n, 0.0);
    merged.v_ang.assign(n, 0.0);
    for (auto* v : {&merged.p_from, &merged.q_from, &merged.p_to, &merged.q_to, &merged.i_from_amps,
                    &merged.i_to_amps, &merged.i_line, &merged.i_line_amps}) {
        v->assign(b, 0.0);
    }
    merged.line_active.assign(b, false);
    merged.bus_active.assign(n, false);
    for (auto* v : {&merged.p_gen_bus, &merged.q_gen_bus, &merged.p_load_bus, &merged.q_load_bus}) v->assign(n, 0.0);
    merged.p_load.assign(net_.loads.size(), 0.0);
    merged.converged = true;

    StepDiagnostics diag;
    diag.t = t;
    diag.tolerance_mw = 10.0 * opt_.solver.tol * net_.s_base;

    for (Island const& island : detect_islands(net_, state_.status)) {
        std::vector<bool> mask(n, false);
        for (int bus : island.buses) mask[static_cast<std::size_t>(bus - 1)] = true;

        std::vector<std::size_t> units;
        for (std::size_t g = 0; g < net_.generators.size(); ++g) {
            if (state_.status.gen_in_service[g] && mask[static_cast<std::size_t>(net_.generators[g].bus - 1)]) {
                units.push_back(g);
            }
        }
        if (units.empty()) {
            blackout(island, t, "no in-service generation");
            continue;
        }

        // Keep the case slack when it survives, otherwise the largest unit.
        int slack_bus = 0;
        for (std::size_t g : units) {
            int const bus = net_.generators[g].bus;
            if (net_.buses[static_cast<std::size_t>(bus - 1)].kind == BusKind::Slack) slack_bus = bus;
        }
        if (slack_bus == 0) {
            std::size_t best = units.front();
            for (std::size_t g : units) {
                if (net_.generators[g].p_max > net_.generators[best].p_max) best = g;
            }
            slack_bus = net_.generators[best].bus;
        }

        // Demand estimate from the previous voltages; the imbalance is shared
        // in droop proportion and the slack takes only the estimation residual.
        double demand = 0.0;
        for (std::size_t l = 0; l < net_.loads.size(); ++l) {
            auto const bi = static_cast<std::size_t>(net_.loads[l].bus - 1);
            if (!mask[bi]) continue;
            double const v = have_previous && previous.v_mag[bi] > 0.0 ? previous.v_mag[bi] : 1.0;
            demand += powerflow::effective_load(net_.loads[l], connected_fraction(net_, state_.status, l), v,
                                                state_.df).first;
        }
        if (have_previous) {
            for (std::size_t k = 0; k < b; ++k) {
                auto const f = static_cast<std::size_t>(net_.lines[k].from_bus - 1);
                if (previous.line_active[k] && mask[f] && state_.status.line_in_service[k]) {
                    demand += previous.p_from[k] + previous.p_to[k];
                }
            }
        }
        double supply = 0.0, weight = 0.0;
        for (std::size_t g : units) {
            supply += mechanical_[g];
            weight += net_.generators[g].mva_base / net_.generators[g].droop;
        }
        // The base solve keeps the case dispatch; the slack covers losses.
        double const deficit = flat ? 0.0 : demand - supply;

        powerflow::OperatingPoint op;
        op.status = state_.status;
        op.df_hz = state_.df;
        op.slack_bus = slack_bus;
        op.active_buses = mask;
        op.gen_mw.assign(net_.generators.size(), 0.0);
        for (std::size_t g : units) {
            Generator const& gen = net_.generators[g];
            double const share = deficit * (gen.mva_base / gen.droop) / weight;
            op.gen_mw[g] = std::clamp(mechanical_[g] + share, 0.0, gen.p_max);
        }

        powerflow::SolverConfig cfg = opt_.solver;
        cfg.flat_start = flat || !have_previous;
        cfg.record_history = opt_.dump_solver;
        PowerFlowSolution sol = powerflow::solve_ac(net_, op, cfg, have_previous ? &previous : nullptr);
        if (!sol.converged && !cfg.flat_start) {
            cfg.flat_start = true;
            sol = powerflow::solve_ac(net_, op, cfg);
        }
        if (opt_.dump_solver) {
            std::ostringstream line;
            line << "t=" << format_number(t, 6) << " slack_bus=" << slack_bus << " buses=" << island.buses.size()
                 << " iterations=" << sol.iterations << " converged=" << (sol.converged ? 1 : 0) << " mismatch=[";
            for (std::size_t i = 0; i < sol.mismatch_history.size(); ++i) {
                line << (i ? " " : "") << format_number(sol.mismatch_history[i], 3);
            }
            line << "]";
            result_.solver_dump.push_back(line.str());
        }
        diag.iterations = std::max(diag.iterations, sol.iterations);
        if (!sol.converged) {
            log(t, RecordKind::SolverFailure, "buses " + bus_list(island.buses), sol.failure);
            blackout(island, t, "voltage collapse (power flow did not converge)");
            continue;
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (!mask[i]) continue;
            merged.bus_active[i] = true;
            merged.v_mag[i] = sol.v_mag[i];
            merged.v_ang[i] = sol.v_ang[i];
            merged.p_gen_bus[i] = sol.p_gen_bus[i];
            merged.q_gen_bus[i] = sol.q_gen_bus[i];
            merged.p_load_bus[i] = sol.p_load_bus[i];
            merged.q_load_bus[i] = sol.q_load_bus[i];
        }
        for (std::size_t k = 0; k < b; ++k) {
            if (!sol.line_active[k]) continue;
            merged.line_active[k] = true;
            merged.p_from[k] = sol.p_from[k];
            merged.q_from[k] = sol.q_from[k];
            merged.p_to[k] = sol.p_to[k];
            merged.q_to[k] = sol.q_to[k];
            merged.i_from_amps[k] = sol.i_from_amps[k];
            merged.i_to_amps[k] = sol.i_to_amps[k];
            merged.i_line[k] = sol.i_line[k];
            merged.i_line_amps[k] = sol.i_line_amps[k];
        }
        for (std::size_t l = 0; l < net_.loads.size(); ++l) {
            if (mask[static_cast<std::size_t>(net_.loads[l].bus - 1)]) merged.p_load[l] = sol.p_load[l];
        }
        merged.iterations = std::max(merged.iterations, sol.iterations);
        merged.max_mismatch = std::max(merged.max_mismatch, sol.max_mismatch);
        if (merged.slack_bus == 0) {
            merged.slack_bus = slack_bus;
            merged.p_slack = sol.p_slack;
        }
    }

    double gen = 0.0, load = 0.0, loss = 0.0, qgen = 0.0, qload = 0.0, qloss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gen += merged.p_gen_bus[i];
        load += merged.p_load_bus[i];
        qgen += merged.q_gen_bus[i];
        qload += merged.q_load_bus[i];
    }
    for (std::size_t k = 0; k < b; ++k) {
        loss += merged.p_from[k] + merged.p_to[k];
        qloss += merged.q_from[k] + merged.q_to[k];
    }
    diag.p_balance_mw = gen - load - loss;
    diag.q_balance_mvar = qgen - qload - qloss;
    if (!result_.diagnostics.empty() && result_.diagnostics.back().t == t) {
        result_.diagnostics.back() = diag;
    } else {
        result_.diagnostics.push_back(diag);
    }

    state_.solution = std::move(merged);
    rates_ = control::loading_rates(state_.solution, net_);
}

void Engine::apply_event(ScheduledEvent const& e) {
    std::string subject = element_name(e.kind) + " " + std::to_string(e.target);
    switch (e.kind) {
        case ElementKind::Generator: {
            auto const g = static_cast<std::size_t>(e.target - 1);
            state_.status.gen_in_service[g] = false;
            std::ostringstream s;
            s << " @bus " << net_.generators[g].bus << " (" << format_number(state_.p_ref[g], 6) << " MW)";
            subject += s.str();
            break;
        }
        case ElementKind::Line:
            state_.status.line_in_service[static_cast<std::size_t>(e.target - 1)] = false;
            break;
        case ElementKind::Load:
            subject = "load @bus " + std::to_string(e.target);
            for (std::size_t l = 0; l < net_.loads.size(); ++l) {
                if (net_.loads[l].bus != e.target) continue;
                std::fill(state_.status.stage_connected[l].begin(), state_.status.stage_connected[l].end(), false);
            }
            break;
    }
    log(e.t, RecordKind::Contingency, subject, "scheduled");
}

void Engine::control(double t) {
    OrientedIncidence const inc = build_incidence(net_, state_.solution, t);
    control::ImpactFactorTable const table =
        control::build_table(net_, state_.status, inc, rates_, state_.relays);
    control::ControlDecision const d =
        control::control_step(net_, state_.status, table, rates_, state_.relays, sc_.controller, t);
    if (d.exhausted) {
        if (!exhausted_logged_) {
            log(t, RecordKind::ControllerExhausted, "line " + std::to_string(d.trigger_line),
                "no sheddable load with an inbound stressed line");
            exhausted_logged_ = true;
        }
        return;
    }
    for (control::ShedCommand const& cmd : d.commands) {
        auto const l = static_cast<std::size_t>(cmd.load_index);
        Load const& load = net_.loads[l];
        state_.status.stage_connected[l][static_cast<std::size_t>(cmd.stage)] = false;
        double const mw = load.p0 * load.stages[static_cast<std::size_t>(cmd.stage)];
        result_.shed_mw += mw;
        result_.sheds.push_back(cmd);
        std::ostringstream subject;
        subject << "load @bus " << cmd.load_bus << " stage " << (cmd.stage + 1) << " (" << format_number(mw, 6)
                << " MW)";
        log(t, RecordKind::Shed, subject.str(), "line " + std::to_string(cmd.cause));
        exhausted_logged_ = false;
    }
}

void Engine::record(double t) {
    TraceSet& tr = result_.traces;
    std::vector<double> row(tr.names.size(), 0.0);
    for (std::size_t i = 0; i < net_.buses.size(); ++i) row[tr.bus_column(static_cast<int>(i) + 1)] = state_.solution.v_mag[i];
    row[tr.df_column()] = state_.df;
    for (std::size_t l = 0; l < net_.loads.size(); ++l) row[tr.load_column(l)] = state_.solution.p_load[l];
    for (std::size_t k = 0; k < net_.lines.size(); ++k) row[tr.line_column(k)] = rates_[k];
    tr.append(t, std::move(row));
}

RunResult Engine::run() {
    check_scenario(sc_, net_);
    state_.status = ServiceState::from_network(net_);
    state_.relays.assign(net_.lines.size(), relay::RelayState{});
    state_.p_ref.reserve(net_.generators.size());
    for (Generator const& g : net_.generators) state_.p_ref.push_back(g.p_set);
    result_.traces = TraceSet::for_network(net_);

    std::size_t next_event = 0;
    while (next_event < sc_.events.size() && sc_.events[next_event].t <= kTimeEps) {
        apply_event(sc_.events[next_event++]);
    }

    solve_all(0.0, true);
    if (!state_.solution.converged || !any_energized()) {
        flush_log();
        throw std::runtime_error("initial power flow failed; the case cannot be simulated");
    }
    // Governor references start at the solved electrical output.
    for (std::size_t g = 0; g < net_.generators.size(); ++g) {
        if (!state_.status.gen_in_service[g]) continue;
        state_.p_ref[g] = net_.generators[g].p_set;
    }
    for (std::size_t g = 0; g < net_.generators.size(); ++g) {
        if (state_.status.gen_in_service[g] && net_.generators[g].bus == state_.solution.slack_bus) {
            double others = 0.0;
            for (std::size_t h = 0; h < net_.generators.size(); ++h) {
                if (h != g && state_.status.gen_in_service[h] && net_.generators[h].bus == net_.generators[g].bus) {
                    others += state_.p_ref[h];
                }
            }
            state_.p_ref[g] = std::max(0.0, state_.solution.p_gen_bus[static_cast<std::size_t>(net_.generators[g].bus - 1)] - others);
            break;
        }
    }
    mechanical_ = redistribute_droop(net_, state_.status, state_.p_ref, state_.df);
    flush_log();

    auto const steps = static_cast<long>(std::llround(sc_.t_end / sc_.dt));
    auto const control_every =
        std::max<long>(1, static_cast<long>(std::llround(sc_.controller.control_interval_s / sc_.dt)));

    for (long k = 1; k <= steps; ++k) {
        double const t_prev = static_cast<double>(k - 1) * sc_.dt;
        double const t = static_cast<double>(k) * sc_.dt;

        // Relays integrate over the step at the rates of the last solution.
        for (std::size_t l = 0; l < net_.lines.size(); ++l) {
            if (!state_.status.line_in_service[l]) continue;
            relay::RelayState& rs = state_.relays[l];
            bool const was = rs.tripped;
            rs = relay::step_relay(rs, rates_[l], sc_.dt, net_.lines[l].curve, sc_.relay, t_prev);
            if (rs.tripped && !was) {
                state_.status.line_in_service[l] = false;
                log(*rs.trip_time, RecordKind::RelayTrip, "line " + std::to_string(l + 1), rate_text(rates_[l]));
            }
        }

        // Frequency responds to the imbalance of the last solution.
        double gen_mw = 0.0, mech_mw = 0.0;
        for (double p : state_.solution.p_gen_bus) gen_mw += p;
        for (std::size_t g = 0; g < net_.generators.size(); ++g) {
            auto const bi = static_cast<std::size_t>(net_.generators[g].bus - 1);
            if (state_.status.gen_in_service[g] && state_.solution.bus_active[bi]) mech_mw += mechanical_[g];
        }
        FrequencyModel const fm = coi_model(net_, state_.status, sc_.frequency.damping);
        if (fm.h_sys > 0.0) state_.df = step_frequency(state_.df, mech_mw - gen_mw, fm, sc_.dt);

        while (next_event < sc_.events.size() && sc_.events[next_event].t <= t + kTimeEps) {
            apply_event(sc_.events[next_event++]);
        }

        solve_all(t, false);

        if (sc_.controller.enabled && k % control_every == 0 && any_energized()) {
            std::size_t const before = result_.sheds.size();
            control(t);
            if (result_.sheds.size() != before) solve_all(t, false);
        }

        state_.time = t;
        flush_log();
        record(t);
        if (!any_energized()) {
            result_.terminated_early = true;
            break;
        }
    }
    flush_log();
    result_.final_state = state_;
    return std::move(result_);
}

}  // namespace

RunResult run(Network const& network, Scenario const& scenario, RunOptions const& options) {
    Engine engine(network, scenario, options);
    return engine.run();
}

}  // namespace gridshed::sim
