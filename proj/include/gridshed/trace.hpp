#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gridshed/network.hpp"

namespace gridshed {

/// Time series recorded once per simulation step. Columns follow the CSV
/// layout: v_bus_<id>..., df, p_load_<bus>..., rate_line_<id>...
struct TraceSet {
    std::vector<std::string> names;
    std::vector<double> time;
    std::vector<std::vector<double>> rows;  // rows[step][column]

    static TraceSet for_network(Network const& network);

    std::optional<std::size_t> column(std::string const& name) const;
    std::vector<double> series(std::string const& name) const;
    void append(double t, std::vector<double> row);

    std::size_t bus_column(int bus_id) const { return static_cast<std::size_t>(bus_id - 1); }
    std::size_t df_column() const { return bus_count; }
    std::size_t load_column(std::size_t load) const { return bus_count + 1 + load; }
    std::size_t line_column(std::size_t line) const { return bus_count + 1 + load_count + line; }

    std::size_t bus_count = 0;   // 0 when read back from CSV
    std::size_t load_count = 0;
};

/// Significant digits used for every numeric CSV field.
inline constexpr int kCsvDigits = 9;

std::string format_number(double value, int digits = kCsvDigits);

/// Header `t,<names...>` then one row per step. Throws std::runtime_error if
/// the sink fails.
void write_csv(TraceSet const& traces, std::ostream& sink);

/// Inverse of write_csv; accepts RFC-4180 quoting.
TraceSet read_csv(std::istream& source);

struct ChartSpec {
    std::string title;
    std::string y_label;  // includes the unit, e.g. "Frequency deviation [Hz]"
    std::vector<std::string> series;
};

/// One SVG line chart of the selected series against time. Throws
/// std::invalid_argument for an empty selection or unknown series names.
void render_svg(TraceSet const& traces, ChartSpec const& chart, std::ostream& sink);

/// The four standard charts: frequency, bus voltages, load power and line
/// loading rates.
std::vector<std::pair<std::string, ChartSpec>> standard_charts(TraceSet const& traces);

}  // namespace gridshed
