#include "gridshed/relay.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace gridshed::relay {

namespace {

constexpr std::array<const char*, 3> kCatalog = {"moderately_inverse", "very_inverse",
                                                  "extremely_inverse"};

// Sub-step bound: no single integration step may exceed this fraction of
// the operate time.
constexpr double kMaxStepFraction = 0.1;

}  // namespace

RelayCurve moderately_inverse() { return {"moderately_inverse", 0.0515, 0.114, 0.02}; }
RelayCurve very_inverse() { return {"very_inverse", 19.61, 0.491, 2.0}; }
RelayCurve extremely_inverse() { return {"extremely_inverse", 28.2, 0.1217, 2.0}; }

std::optional<RelayCurve> curve_by_name(std::string const& name) {
    if (name == kCatalog[0]) return moderately_inverse();
    if (name == kCatalog[1]) return very_inverse();
    if (name == kCatalog[2]) return extremely_inverse();
    return std::nullopt;
}

std::span<const char* const> curve_names() { return kCatalog; }

std::string check_curve(RelayCurve const& curve) {
    if (!(curve.alpha > 0.0)) return "alpha must be > 0";
    if (!(curve.gamma > 0.0)) return "gamma must be > 0";
    if (!(curve.beta >= 0.0)) return "beta must be >= 0";
    return {};
}

double overcurrent_rate(double current, double pickup) {
    if (!(pickup > 0.0)) {
        throw std::invalid_argument("relay pickup must be positive");
    }
    return current / pickup;
}

double trip_time(double rate, RelayCurve const& curve) {
    if (!(rate > 1.0)) return kInfiniteTime;
    double const denom = std::pow(rate, curve.gamma) - 1.0;
    if (!(denom > 0.0)) return kInfiniteTime;  // r^gamma rounds to 1
    return curve.alpha / denom + curve.beta;
}

RelayState step_relay(RelayState state, double rate, double dt, RelayCurve const& curve,
                      RelaySettings const& settings, double t_start) {
    if (state.tripped || !(dt > 0.0)) return state;

    if (!(rate > 1.0)) {
        double const decay = settings.reset_time > 0.0 ? dt / settings.reset_time : 1.0;
        state.travel = std::max(0.0, state.travel - decay);
        return state;
    }

    double const t_op = trip_time(rate, curve);
    if (!std::isfinite(t_op)) return state;

    int const substeps = std::max(1, static_cast<int>(std::ceil(dt / (kMaxStepFraction * t_op))));
    double const h = dt / substeps;
    for (int s = 0; s < substeps; ++s) {
        double const before = state.travel;
        state.travel += h / t_op;
        if (state.travel >= 1.0) {
            state.tripped = true;
            state.trip_time = t_start + s * h + (1.0 - before) * t_op;
            return state;
        }
    }
    return state;
}

double remaining_time(RelayState const& state, double rate, RelayCurve const& curve) {
    if (state.tripped || state.travel >= 1.0) return 0.0;
    if (!(rate > 1.0)) return kInfiniteTime;
    return (1.0 - state.travel) * trip_time(rate, curve);
}

}  // namespace gridshed::relay
