#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>

namespace gridshed::relay {

inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

/// Inverse-time characteristic t(r) = alpha / (r^gamma - 1) + beta.
struct RelayCurve {
    std::string name;
    double alpha = 0.0;  // s
    double beta = 0.0;   // s
    double gamma = 0.0;

    friend bool operator==(RelayCurve const&, RelayCurve const&) = default;
};

// IEEE C37.112 constants at unit time dial.
RelayCurve moderately_inverse();
RelayCurve very_inverse();
RelayCurve extremely_inverse();

/// Looks up a catalog curve by name ("moderately_inverse", "very_inverse",
/// "extremely_inverse"). Returns nullopt for unknown names.
std::optional<RelayCurve> curve_by_name(std::string const& name);
std::span<const char* const> curve_names();

/// Empty string when the constants are usable, otherwise the broken rule.
std::string check_curve(RelayCurve const& curve);

/// Ratio of current to pickup. Throws std::invalid_argument for pickup <= 0.
double overcurrent_rate(double current, double pickup);

/// Closed-form operate time for a constant rate. Returns kInfiniteTime for
/// r <= 1: the relay is in its reset region and never operates.
double trip_time(double rate, RelayCurve const& curve);

struct RelaySettings {
    double reset_time = 10.0;  // s, full travel back to zero
};

/// Induction-disk style travel accumulator.
struct RelayState {
    double travel = 0.0;
    bool tripped = false;
    std::optional<double> trip_time;  // absolute instant of operation

    friend bool operator==(RelayState const&, RelayState const&) = default;
};

/// Advances the accumulator over [t_start, t_start + dt] with the rate held
/// constant. Above pickup travel grows by dt / trip_time(r); at or below
/// pickup it decays linearly over settings.reset_time. Operation latches and
/// the trip instant is interpolated inside the step.
RelayState step_relay(RelayState state, double rate, double dt, RelayCurve const& curve,
                      RelaySettings const& settings = {}, double t_start = 0.0);

/// Time left before operation if the present rate persists.
double remaining_time(RelayState const& state, double rate, RelayCurve const& curve);

}  // namespace gridshed::relay
