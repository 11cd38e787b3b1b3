#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gridshed/powerflow.hpp"
#include "random_network.hpp"
#include "reference_solver.hpp"

using namespace gridshed;
using namespace gridshed::powerflow;

namespace {

std::string const kCase = GRIDSHED_SOURCE_DIR "/cases/ieee39.json";

Network two_bus_network(double load_mw, double b_shunt = 0.0) {
    Network net;
    net.buses = {{1, BusKind::Slack, 230.0, 1.0}, {2, BusKind::PQ, 230.0, 1.0}};
    Line l;
    l.id = 1;
    l.from_bus = 1;
    l.to_bus = 2;
    l.r = 0.01;
    l.x = 0.1;
    l.b_shunt = b_shunt;
    l.rating_amps = 300.0;
    l.pickup_current = 300.0;
    net.lines = {l};
    Load ld;
    ld.bus = 2;
    ld.p0 = load_mw;
    ld.q0 = 0.2 * load_mw;
    net.loads = {ld};
    net.generators = {{1, 0.0, 500.0, 0.05, 4.0, 500.0, true}};
    return net;
}

double balance_mw(PowerFlowSolution const& s) {
    double b = 0.0;
    for (std::size_t i = 0; i < s.p_gen_bus.size(); ++i) b += s.p_gen_bus[i] - s.p_load_bus[i];
    for (std::size_t k = 0; k < s.p_from.size(); ++k) b -= s.p_from[k] + s.p_to[k];
    return b;
}

double balance_mvar(PowerFlowSolution const& s) {
    double b = 0.0;
    for (std::size_t i = 0; i < s.q_gen_bus.size(); ++i) b += s.q_gen_bus[i] - s.q_load_bus[i];
    for (std::size_t k = 0; k < s.q_from.size(); ++k) b -= s.q_from[k] + s.q_to[k];
    return b;
}

}  // namespace

TEST(EffectiveLoad, NominalPoint) {
    Load ld;
    ld.p0 = 80.0;
    ld.q0 = 30.0;
    auto const [p, q] = effective_load(ld, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(p, 80.0);
    EXPECT_DOUBLE_EQ(q, 30.0);
}

TEST(EffectiveLoad, HalvesAtPointFourWithExponent0756) {
    // 0.4^k = 0.5 gives k = ln 0.5 / ln 0.4 = 0.7565
    EXPECT_NEAR(std::log(0.5) / std::log(0.4), 0.756, 0.001);
    Load ld;
    ld.p0 = 1100.0;
    ld.kpv = 0.756;
    EXPECT_NEAR(effective_load(ld, 0.4, 0.0).first, 550.0, 0.5);
}

TEST(EffectiveLoad, FirstStageOff) {
    Load ld;
    ld.p0 = 100.0;
    ld.q0 = 40.0;
    ld.stage_status = {false, true, true, true};
    auto const [p, q] = effective_load(ld, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(p, 75.0);
    EXPECT_DOUBLE_EQ(q, 30.0);
}

TEST(EffectiveLoad, FrequencyTermOnActivePowerOnly) {
    Load ld;
    ld.p0 = 100.0;
    ld.q0 = 40.0;
    ld.kpf = 0.02;
    auto const [p, q] = effective_load(ld, 1.0, 1.0, -0.5);
    EXPECT_DOUBLE_EQ(p, 99.0);
    EXPECT_DOUBLE_EQ(q, 40.0);
}

TEST(EffectiveLoad, MonotoneInStages) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Load ld;
        ld.p0 = 500.0 * u(rng);
        ld.kpv = 2.0 * u(rng);
        ld.stages = {0.1, 0.2, 0.3, 0.4};
        ld.stage_status = {u(rng) < 0.5, u(rng) < 0.5, u(rng) < 0.5, u(rng) < 0.5};
        double const v = 0.5 + u(rng);
        double const df = u(rng) - 0.5;
        double const before = effective_load(ld, v, df).first;
        for (std::size_t s = 0; s < 4; ++s) {
            Load off = ld;
            off.stage_status[s] = false;
            EXPECT_LE(effective_load(off, v, df).first, before);
        }
    }
}

TEST(SolveAc, TwoBusZeroLoad) {
    Network const net = two_bus_network(0.0);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    ASSERT_TRUE(sol.converged);
    for (double v : sol.v_mag) EXPECT_NEAR(v, 1.0, 1e-12);
    for (double a : sol.v_ang) EXPECT_NEAR(a, 0.0, 1e-12);
    EXPECT_NEAR(sol.p_from[0], 0.0, 1e-9);
    EXPECT_NEAR(sol.q_to[0], 0.0, 1e-9);
    EXPECT_NEAR(line_current(sol, 1), 0.0, 1e-9);
}

TEST(SolveAc, BundledBaseCase) {
    Network const net = load_case_file(kCase);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    ASSERT_TRUE(sol.converged) << sol.failure;
    EXPECT_LE(sol.iterations, 10);
    EXPECT_LE(sol.max_mismatch, 1e-8);
    for (std::size_t k = 0; k < net.lines.size(); ++k) {
        EXPECT_NEAR(line_current(sol, static_cast<int>(k) + 1), 0.85, 1e-6) << "line " << k + 1;
    }
    // the calibrated slack set-point is what the solve hands back
    EXPECT_NEAR(sol.p_slack, net.generators[1].p_set, 1e-4);
}

TEST(SolveAc, BundledCaseAgainstReference) {
    Network const net = load_case_file(kCase);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    auto const ref = gridshed::testing::reference_solve(net);
    ASSERT_TRUE(ref.converged);
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
        EXPECT_NEAR(sol.v_mag[i], ref.v_mag[i], 0.005) << "bus " << i + 1;
        EXPECT_NEAR(sol.v_ang[i], ref.v_ang[i], 1e-6) << "bus " << i + 1;
    }
}

TEST(SolveAc, RandomNetworksAgainstReference) {
    std::mt19937 rng(101);
    for (int c = 0; c < 40; ++c) {
        auto const [net, sol] = gridshed::testing::random_solved_network(rng);
        auto const ref = gridshed::testing::reference_solve(net);
        ASSERT_TRUE(ref.converged) << "draw " << c;
        for (std::size_t i = 0; i < net.buses.size(); ++i) {
            EXPECT_NEAR(sol.v_mag[i], ref.v_mag[i], 1e-7) << "draw " << c << " bus " << i + 1;
            EXPECT_NEAR(sol.v_ang[i], ref.v_ang[i], 1e-7) << "draw " << c << " bus " << i + 1;
        }
    }
}

TEST(SolveAc, CurrentsMatchAdmittanceEvaluation) {
    std::mt19937 rng(404);
    gridshed::testing::RandomNetworkOptions opt;
    opt.min_buses = opt.max_buses = 4;
    for (int c = 0; c < 30; ++c) {
        auto const [net, sol] = gridshed::testing::random_solved_network(rng, opt);
        auto const ref = gridshed::testing::reference_currents(net, sol.v_mag, sol.v_ang);
        for (std::size_t k = 0; k < net.lines.size(); ++k) {
            EXPECT_NEAR(sol.i_from_amps[k], ref.from_amps[k], 1e-9 * (1.0 + ref.from_amps[k]));
            EXPECT_NEAR(sol.i_to_amps[k], ref.to_amps[k], 1e-9 * (1.0 + ref.to_amps[k]));
            double const expected = std::max(ref.from_amps[k], ref.to_amps[k]) / net.lines[k].rating_amps;
            EXPECT_NEAR(line_current(sol, static_cast<int>(k) + 1), expected, 1e-9 * (1.0 + expected));
        }
    }
}

TEST(SolveAc, YbusMatchesPiModelAssembly) {
    std::mt19937 rng(8);
    for (int c = 0; c < 10; ++c) {
        Network const net = gridshed::testing::random_network(rng);
        std::vector<bool> on(net.lines.size(), true), active(net.buses.size(), true);
        auto const y = build_ybus(net, on, active);
        auto const ref = gridshed::testing::reference_ybus(net);
        Eigen::MatrixXcd const dense(y);
        for (std::size_t i = 0; i < net.buses.size(); ++i) {
            for (std::size_t j = 0; j < net.buses.size(); ++j) {
                EXPECT_NEAR(std::abs(dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - ref[i][j]),
                            0.0, 1e-9);
            }
        }
    }
}

TEST(SolveAc, MismatchCertificate) {
    std::mt19937 rng(55);
    for (int c = 0; c < 30; ++c) {
        auto const [net, sol] = gridshed::testing::random_solved_network(rng);
        MismatchModel const model(net, OperatingPoint::base_case(net));
        EXPECT_LE(model.max_mismatch(sol.v_mag, sol.v_ang), 1e-8) << "draw " << c;
    }
    Network const net = load_case_file(kCase);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    MismatchModel const model(net, OperatingPoint::base_case(net));
    EXPECT_LE(model.max_mismatch(sol.v_mag, sol.v_ang), 1e-8);
}

TEST(SolveAc, JacobianMatchesFiniteDifferences) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int c = 0; c < 20; ++c) {
        Network net = gridshed::testing::random_network(rng);
        for (Load& ld : net.loads) ld.kpv = 1.0 + jitter(rng) * 10.0;  // nonlinear voltage dependence
        OperatingPoint op = OperatingPoint::base_case(net);
        op.df_hz = jitter(rng);
        MismatchModel const model(net, op);
        std::vector<double> vm(net.buses.size()), va(net.buses.size());
        for (std::size_t i = 0; i < vm.size(); ++i) {
            vm[i] = 1.0 + jitter(rng);
            va[i] = jitter(rng);
        }
        Eigen::MatrixXd const jac(model.jacobian(vm, va));
        auto const& ang = model.angle_buses();
        auto const& mag = model.magnitude_buses();
        double const h = 1e-6;
        for (std::size_t col = 0; col < model.unknowns(); ++col) {
            auto vmp = vm, vmm = vm, vap = va, vam = va;
            if (col < ang.size()) {
                auto const b = static_cast<std::size_t>(ang[col]);
                vap[b] += h;
                vam[b] -= h;
            } else {
                auto const b = static_cast<std::size_t>(mag[col - ang.size()]);
                vmp[b] += h;
                vmm[b] -= h;
            }
            Eigen::VectorXd const fd = (model.mismatch(vmp, vap) - model.mismatch(vmm, vam)) / (2.0 * h);
            for (Eigen::Index row = 0; row < fd.size(); ++row) {
                double const a = jac(row, static_cast<Eigen::Index>(col));
                EXPECT_NEAR(a, fd(row), 1e-6 * std::max(1.0, std::abs(fd(row))))
                    << "draw " << c << " row " << row << " col " << col;
            }
        }
    }
}

TEST(SolveAc, PowerBalance) {
    std::mt19937 rng(31);
    for (int c = 0; c < 30; ++c) {
        auto const [net, sol] = gridshed::testing::random_solved_network(rng);
        EXPECT_NEAR(balance_mw(sol), 0.0, 10.0 * 1e-8 * net.s_base);
        EXPECT_NEAR(balance_mvar(sol), 0.0, 10.0 * 1e-8 * net.s_base);
    }
    Network const net = load_case_file(kCase);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    EXPECT_NEAR(balance_mw(sol), 0.0, 10.0 * 1e-8 * net.s_base);
    EXPECT_NEAR(balance_mvar(sol), 0.0, 10.0 * 1e-8 * net.s_base);
}

TEST(SolveAc, WarmStartNeedsFewerIterations) {
    Network const net = load_case_file(kCase);
    auto const op = OperatingPoint::base_case(net);
    auto const cold = solve_ac(net, op);
    SolverConfig warm_cfg;
    warm_cfg.flat_start = false;
    auto const warm = solve_ac(net, op, warm_cfg, &cold);
    ASSERT_TRUE(warm.converged);
    EXPECT_LT(warm.iterations, cold.iterations);
}

TEST(SolveAc, ReportsDivergenceWithoutThrowing) {
    Network const net = two_bus_network(5000.0);
    PowerFlowSolution sol;
    EXPECT_NO_THROW(sol = solve_ac(net, OperatingPoint::base_case(net)));
    EXPECT_FALSE(sol.converged);
    EXPECT_FALSE(sol.failure.empty());
}

TEST(SolveAc, HistoryRecordedOnRequest) {
    Network const net = load_case_file(kCase);
    SolverConfig cfg;
    cfg.record_history = true;
    auto const sol = solve_ac(net, OperatingPoint::base_case(net), cfg);
    ASSERT_EQ(sol.mismatch_history.size(), static_cast<std::size_t>(sol.iterations) + 1);
    EXPECT_LE(sol.mismatch_history.back(), 1e-8);
}

TEST(LineCurrent, OutOfServiceLineIsAnError) {
    Network net = two_bus_network(10.0);
    Line spare = net.lines[0];
    spare.id = 2;
    spare.in_service = false;
    net.lines.push_back(spare);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    ASSERT_TRUE(sol.converged);
    EXPECT_GT(line_current(sol, 1), 0.0);
    EXPECT_THROW(line_current(sol, 2), std::invalid_argument);
    EXPECT_THROW(line_current(sol, 7), std::invalid_argument);
}

TEST(LineCurrent, OpenEndedLineCarriesNothing) {
    Network net = two_bus_network(10.0);
    net.buses.push_back({3, BusKind::PQ, 230.0, 1.0});
    Line stub = net.lines[0];
    stub.id = 2;
    stub.from_bus = 2;
    stub.to_bus = 3;
    net.lines.push_back(stub);
    auto const sol = solve_ac(net, OperatingPoint::base_case(net));
    ASSERT_TRUE(sol.converged);
    EXPECT_NEAR(line_current(sol, 2), 0.0, 1e-9);
}

TEST(Calibration, EveryLineAtTarget) {
    Network const nominal = load_case_file(GRIDSHED_SOURCE_DIR "/cases/ieee39-nominal.json");
    auto const sol = solve_ac(nominal, OperatingPoint::base_case(nominal));
    ASSERT_TRUE(sol.converged);
    for (double target : {0.85, 0.5}) {
        Network const cal = calibrate_ratings(nominal, sol, target);
        auto const again = solve_ac(cal, OperatingPoint::base_case(cal));
        ASSERT_TRUE(again.converged);
        for (std::size_t k = 0; k < cal.lines.size(); ++k) {
            EXPECT_NEAR(again.i_line[k], target, 1e-6);
            EXPECT_DOUBLE_EQ(cal.lines[k].pickup_current, cal.lines[k].rating_amps);
        }
    }
}

TEST(Calibration, BaseCurrent) {
    EXPECT_NEAR(base_current_amps(100.0, 345.0), 167.3479, 1e-3);
}
