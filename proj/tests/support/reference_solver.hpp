#pragma once

#include <complex>
#include <vector>

#include "gridshed/network.hpp"

namespace gridshed::testing {

// Independent AC power flow used as an oracle: rectangular voltage
// coordinates, dense finite-difference Jacobian, Gaussian elimination.
// Shares nothing with the library solver except the Network data.

struct ReferenceResult {
    std::vector<double> v_mag;
    std::vector<double> v_ang;
    int iterations = 0;
    bool converged = false;
    double max_mismatch = 0.0;  // pu
};

/// All elements in service, generators at p_set, df = 0.
ReferenceResult reference_solve(Network const& net, double tol = 1e-10, int max_iter = 50);

/// Sending- and receiving-end current magnitudes (amps) of every line from
/// the given bus voltages, evaluated element by element from the pi model.
struct EndCurrents {
    std::vector<double> from_amps;
    std::vector<double> to_amps;
};

EndCurrents reference_currents(Network const& net, std::vector<double> const& v_mag,
                               std::vector<double> const& v_ang);

/// Dense complex bus admittance matrix assembled from the pi model.
std::vector<std::vector<std::complex<double>>> reference_ybus(Network const& net);

/// Solves a x = b by Gaussian elimination with partial pivoting.
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b);

}  // namespace gridshed::testing
