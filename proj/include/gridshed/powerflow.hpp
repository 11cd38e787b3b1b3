#pragma once

#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "gridshed/network.hpp"

namespace gridshed::powerflow {

struct SolverConfig {
    double tol = 1e-8;  // pu mismatch
    int max_iter = 20;
    bool flat_start = true;
    bool record_history = false;
};

/// Inputs to one Newton solve beyond the static network data.
struct OperatingPoint {
    ServiceState status;
    std::vector<double> gen_mw;  // electrical dispatch per generator (slack ignored)
    double df_hz = 0.0;
    int slack_bus = 0;                // bus id; 0 selects the case's slack bus
    std::vector<bool> active_buses;  // buses in the solved component; empty = all energized

    static OperatingPoint base_case(Network const& network);
};

struct PowerFlowSolution {
    std::vector<double> v_mag;  // pu, 0 for buses outside the solved set
    std::vector<double> v_ang;  // rad
    std::vector<double> p_from, q_from, p_to, q_to;  // MW / MVAr per line end
    std::vector<double> i_from_amps, i_to_amps;
    std::vector<double> i_line;       // max end current in pu of rating
    std::vector<double> i_line_amps;  // max end current in amps
    std::vector<bool> line_active;    // line carried flow in this solution
    std::vector<bool> bus_active;
    std::vector<double> p_gen_bus, q_gen_bus;    // MW / MVAr generated at each bus
    std::vector<double> p_load_bus, q_load_bus;  // effective demand at each bus
    std::vector<double> p_load;                  // effective MW per load
    double p_slack = 0.0;                        // MW from the slack bus
    int slack_bus = 0;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;  // pu
    std::string failure;        // cause when !converged
    std::vector<double> mismatch_history;
};

/// Voltage- and frequency-dependent demand of one load for the given fraction
/// of connected feeders: P = p0 * f * v^kpv * (1 + kpf*df), Q = q0 * f * v^kqv.
std::pair<double, double> effective_load(Load const& load, double connected_fraction, double v,
                                         double df_hz);
std::pair<double, double> effective_load(Load const& load, double v, double df_hz);

/// Newton-Raphson in polar form over the buses of `op`. Never throws on
/// numerical trouble: check `converged` and `failure`.
PowerFlowSolution solve_ac(Network const& network, OperatingPoint const& op,
                           SolverConfig const& config = {},
                           PowerFlowSolution const* warm_start = nullptr);

/// Max of sending- and receiving-end current in pu of rating. Throws
/// std::invalid_argument if line `line_id` did not carry flow in `solution`.
double line_current(PowerFlowSolution const& solution, int line_id);

/// Bus admittance matrix over in-service lines between active buses.
Eigen::SparseMatrix<std::complex<double>> build_ybus(Network const& network,
                                                     std::vector<bool> const& line_on,
                                                     std::vector<bool> const& bus_active);

/// The mismatch equations of solve_ac, exposed for certificates and
/// Jacobian checks. Unknowns: angles of non-slack active buses followed by
/// magnitudes of PQ buses.
class MismatchModel {
  public:
    MismatchModel(Network const& network, OperatingPoint const& op);

    int slack() const { return slack_; }
    std::vector<int> const& angle_buses() const { return pvpq_; }
    std::vector<int> const& magnitude_buses() const { return pq_; }
    std::size_t unknowns() const { return pvpq_.size() + pq_.size(); }
    bool is_pv(int bus) const { return kind_[bus] == 1; }
    double setpoint(int bus) const { return vset_[bus]; }
    std::vector<bool> const& bus_active() const { return active_; }
    std::vector<bool> const& line_on() const { return line_on_; }

    /// Residual vector: P mismatches for pvpq then Q mismatches for pq (pu).
    Eigen::VectorXd mismatch(std::vector<double> const& vm, std::vector<double> const& va) const;

    /// Largest absolute entry of mismatch() (pu).
    double max_mismatch(std::vector<double> const& vm, std::vector<double> const& va) const;

    Eigen::SparseMatrix<double> jacobian(std::vector<double> const& vm,
                                         std::vector<double> const& va) const;

    /// Demand (pu) at each bus for the given magnitudes.
    void bus_demand(std::vector<double> const& vm, std::vector<double>& pd, std::vector<double>& qd,
                    std::vector<double>* dpd_dv = nullptr, std::vector<double>* dqd_dv = nullptr) const;

    std::vector<double> const& p_gen() const { return pg_; }  // pu scheduled

    Eigen::SparseMatrix<std::complex<double>> const& ybus() const { return ybus_; }

  private:
    void injections(std::vector<double> const& vm, std::vector<double> const& va,
                    std::vector<double>& p, std::vector<double>& q) const;

    Network const& net_;
    std::vector<double> load_fraction_;
    double df_ = 0.0;
    int slack_ = -1;
    std::vector<int> kind_;  // 0 slack, 1 PV, 2 PQ, -1 inactive
    std::vector<double> vset_;
    std::vector<double> pg_;
    std::vector<bool> active_;
    std::vector<bool> line_on_;
    std::vector<int> pvpq_, pq_;
    Eigen::SparseMatrix<std::complex<double>> ybus_;
};

/// Sets every line's rating (and pickup) so that its current in `solution`
/// equals `target` pu of rating, and writes the solved slack output into the
/// slack generator's p_set so the case starts in balance.
Network calibrate_ratings(Network network, PowerFlowSolution const& solution, double target);

/// Base current in amps for a bus of the given voltage level.
double base_current_amps(double s_base_mva, double base_kv);

}  // namespace gridshed::powerflow
