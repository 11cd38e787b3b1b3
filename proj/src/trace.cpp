#include "gridshed/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gridshed {

namespace {

std::string csv_field(std::string const& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Splits one CSV record, consuming further lines when a quoted field spans
// them. Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string line;
    if (!std::getline(in, line)) return false;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0;; ++i) {
        if (i == line.size()) {
            if (quoted) {
                field += '\n';
                if (!std::getline(in, line)) throw std::runtime_error("csv: unterminated quoted field");
                i = static_cast<std::size_t>(-1);
                continue;
            }
            break;
        }
        char const c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return true;
}

std::string svg_escape(std::string const& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Tick step of 1, 2 or 5 times a power of ten giving roughly `target` ticks.
double nice_step(double span, int target) {
    if (!(span > 0.0)) return 1.0;
    double const raw = span / target;
    double const mag = std::pow(10.0, std::floor(std::log10(raw)));
    double const norm = raw / mag;
    double const step = norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0;
    return step * mag;
}

int decimals_for(double step) {
    if (step >= 1.0) return 0;
    return std::min(6, static_cast<int>(std::ceil(-std::log10(step) - 1e-9)));
}

constexpr char const* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

TraceSet TraceSet::for_network(Network const& network) {
    TraceSet t;
    t.bus_count = network.buses.size();
    t.load_count = network.loads.size();
    for (Bus const& b : network.buses) t.names.push_back("v_bus_" + std::to_string(b.id));
    t.names.push_back("df");
    std::map<int, int> seen;
    for (Load const& l : network.loads) {
        int const dup = seen[l.bus]++;
        std::string name = "p_load_" + std::to_string(l.bus);
        if (dup > 0) name += "_" + std::to_string(dup + 1);
        t.names.push_back(std::move(name));
    }
    for (Line const& l : network.lines) t.names.push_back("rate_line_" + std::to_string(l.id));
    return t;
}

std::optional<std::size_t> TraceSet::column(std::string const& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> TraceSet::series(std::string const& name) const {
    auto col = column(name);
    if (!col) throw std::invalid_argument("unknown series '" + name + "'");
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto const& r : rows) out.push_back(r[*col]);
    return out;
}

void TraceSet::append(double t, std::vector<double> row) {
    if (row.size() != names.size()) throw std::invalid_argument("trace row width does not match names");
    time.push_back(t);
    rows.push_back(std::move(row));
}

std::string format_number(double value, int digits) {
    if (value == 0.0) return "0";  // folds -0
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

void write_csv(TraceSet const& traces, std::ostream& sink) {
    sink << "t";
    for (auto const& n : traces.names) sink << ',' << csv_field(n);
    sink << '\n';
    for (std::size_t r = 0; r < traces.rows.size(); ++r) {
        sink << format_number(traces.time[r]);
        for (double v : traces.rows[r]) sink << ',' << format_number(v);
        sink << '\n';
    }
    sink.flush();
    if (!sink) throw std::runtime_error("csv: write failed");
}

TraceSet read_csv(std::istream& source) {
    TraceSet t;
    std::vector<std::string> fields;
    if (!read_record(source, fields) || fields.empty() || fields[0] != "t") {
        throw std::runtime_error("csv: missing 't' header");
    }
    t.names.assign(fields.begin() + 1, fields.end());
    while (read_record(source, fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != t.names.size() + 1) throw std::runtime_error("csv: ragged row");
        std::vector<double> row;
        row.reserve(t.names.size());
        for (std::size_t i = 1; i < fields.size(); ++i) row.push_back(std::stod(fields[i]));
        t.time.push_back(std::stod(fields[0]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

void render_svg(TraceSet const& traces, ChartSpec const& chart, std::ostream& sink) {
    if (chart.series.empty()) throw std::invalid_argument("svg: empty series selection");
    std::vector<std::size_t> cols;
    for (auto const& s : chart.series) {
        auto c = traces.column(s);
        if (!c) {
            std::string msg = "svg: unknown series '" + s + "'; available:";
            for (auto const& n : traces.names) msg += " " + n;
            throw std::invalid_argument(msg);
        }
        cols.push_back(*c);
    }

    double t0 = traces.time.empty() ? 0.0 : traces.time.front();
    double t1 = traces.time.empty() ? 1.0 : traces.time.back();
    if (!(t1 > t0)) t1 = t0 + 1.0;
    double lo = INFINITY, hi = -INFINITY;
    for (auto const& r : traces.rows) {
        for (std::size_t c : cols) {
            lo = std::min(lo, r[c]);
            hi = std::max(hi, r[c]);
        }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-9) {
        double const pad = std::max(std::abs(hi) * 0.05, 0.05);
        lo -= pad;
        hi += pad;
    }
    double const ystep = nice_step(hi - lo, 6);
    lo = std::floor(lo / ystep) * ystep;
    hi = std::ceil(hi / ystep) * ystep;
    double const xstep = nice_step(t1 - t0, 10);

    constexpr double left = 80, top = 40, plot_w = 640, plot_h = 360, legend_w = 160;
    double const legend_h = 16.0 * static_cast<double>(cols.size()) + 20.0;
    double const height = std::max(top + plot_h + 60.0, top + legend_h);
    double const width = left + plot_w + 20 + legend_w;
    auto xmap = [&](double t) { return left + (t - t0) / (t1 - t0) * plot_w; };
    auto ymap = [&](double v) { return top + (hi - v) / (hi - lo) * plot_h; };

    sink << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
         << fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    sink << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    sink << "<text x=\"" << fixed(left + plot_w / 2, 1) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
         << svg_escape(chart.title) << "</text>\n";
    sink << "<rect x=\"" << fixed(left, 1) << "\" y=\"" << fixed(top, 1) << "\" width=\"" << fixed(plot_w, 1)
         << "\" height=\"" << fixed(plot_h, 1) << "\" fill=\"none\" stroke=\"black\"/>\n";

    int const ydec = decimals_for(ystep);
    for (double v = lo; v <= hi + ystep * 1e-6; v += ystep) {
        double const y = ymap(v);
        sink << "<line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(y, 1) << "\" x2=\"" << fixed(left + plot_w, 1)
             << "\" y2=\"" << fixed(y, 1) << "\" stroke=\"#dddddd\"/>\n";
        sink << "<text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(y + 4, 1) << "\" text-anchor=\"end\">"
             << fixed(std::abs(v) < ystep * 1e-6 ? 0.0 : v, ydec) << "</text>\n";
    }
    int const xdec = decimals_for(xstep);
    for (double t = std::ceil(t0 / xstep) * xstep; t <= t1 + xstep * 1e-6; t += xstep) {
        double const x = xmap(t);
        sink << "<line x1=\"" << fixed(x, 1) << "\" y1=\"" << fixed(top + plot_h, 1) << "\" x2=\"" << fixed(x, 1)
             << "\" y2=\"" << fixed(top + plot_h + 5, 1) << "\" stroke=\"black\"/>\n";
        sink << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(top + plot_h + 18, 1)
             << "\" text-anchor=\"middle\">" << fixed(t, xdec) << "</text>\n";
    }
    sink << "<text x=\"" << fixed(left + plot_w / 2, 1) << "\" y=\"" << fixed(top + plot_h + 40, 1)
         << "\" text-anchor=\"middle\">Time [s]</text>\n";
    sink << "<text transform=\"translate(20," << fixed(top + plot_h / 2, 1)
         << ") rotate(-90)\" text-anchor=\"middle\">" << svg_escape(chart.y_label) << "</text>\n";

    for (std::size_t s = 0; s < cols.size(); ++s) {
        char const* color = kPalette[s % std::size(kPalette)];
        sink << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t r = 0; r < traces.rows.size(); ++r) {
            if (r) sink << ' ';
            sink << fixed(xmap(traces.time[r]), 2) << ',' << fixed(ymap(traces.rows[r][cols[s]]), 2);
        }
        sink << "\"/>\n";
        double const ly = top + 10 + 16.0 * static_cast<double>(s);
        double const lx = left + plot_w + 20;
        sink << "<line x1=\"" << fixed(lx, 1) << "\" y1=\"" << fixed(ly, 1) << "\" x2=\"" << fixed(lx + 20, 1)
             << "\" y2=\"" << fixed(ly, 1) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        sink << "<text x=\"" << fixed(lx + 26, 1) << "\" y=\"" << fixed(ly + 4, 1) << "\">"
             << svg_escape(chart.series[s]) << "</text>\n";
    }
    sink << "</svg>\n";
    if (!sink) throw std::runtime_error("svg: write failed");
}

std::vector<std::pair<std::string, ChartSpec>> standard_charts(TraceSet const& traces) {
    ChartSpec freq{"Frequency deviation", "Frequency deviation [Hz]", {"df"}};
    ChartSpec volt{"Bus voltages", "Voltage [pu]", {}};
    ChartSpec load{"Load active power", "Active power [MW]", {}};
    ChartSpec rate{"Line loading rates", "Loading rate [pu of pickup]", {}};
    for (auto const& n : traces.names) {
        if (n.rfind("v_bus_", 0) == 0) volt.series.push_back(n);
        else if (n.rfind("p_load_", 0) == 0) load.series.push_back(n);
        else if (n.rfind("rate_line_", 0) == 0) rate.series.push_back(n);
    }
    std::vector<std::pair<std::string, ChartSpec>> out;
    out.emplace_back("frequency", std::move(freq));
    if (!volt.series.empty()) out.emplace_back("voltage", std::move(volt));
    if (!load.series.empty()) out.emplace_back("loads", std::move(load));
    if (!rate.series.empty()) out.emplace_back("rates", std::move(rate));
    return out;
}

}  // namespace gridshed
