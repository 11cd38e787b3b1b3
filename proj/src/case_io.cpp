#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridshed/network.hpp"

namespace gridshed {

using nlohmann::json;

namespace {

class Reader {
  public:
    Reader(json const& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(std::string const& what) const {
        throw CaseError(where_ + ": " + what);
    }

    bool has(char const* key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

    json const& field(char const* key) const {
        if (!has(key)) fail(std::string("missing field '") + key + "'");
        return obj_.at(key);
    }

    double number(char const* key) const {
        json const& v = field(key);
        if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
        return v.get<double>();
    }
    double number(char const* key, double fallback) const { return has(key) ? number(key) : fallback; }

    int integer(char const* key) const {
        json const& v = field(key);
        if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
        return v.get<int>();
    }

    bool boolean(char const* key, bool fallback) const {
        if (!has(key)) return fallback;
        json const& v = obj_.at(key);
        if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
        return v.get<bool>();
    }

    std::string string(char const* key) const {
        json const& v = field(key);
        if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
        return v.get<std::string>();
    }

    std::string const& where() const { return where_; }

  private:
    json const& obj_;
    std::string where_;
};

json const& array_field(json const& doc, char const* key, bool required) {
    static json const empty = json::array();
    if (!doc.contains(key)) {
        if (required) throw CaseError(std::string("case: missing field '") + key + "'");
        return empty;
    }
    if (!doc.at(key).is_array()) throw CaseError(std::string("case: field '") + key + "' must be an array");
    return doc.at(key);
}

std::string element(char const* list, std::size_t idx, json const& obj) {
    std::string s = std::string(list) + "[" + std::to_string(idx) + "]";
    if (obj.is_object() && obj.contains("id") && obj.at("id").is_number_integer()) {
        s += " (id " + std::to_string(obj.at("id").get<int>()) + ")";
    } else if (obj.is_object() && obj.contains("bus") && obj.at("bus").is_number_integer()) {
        s += " (bus " + std::to_string(obj.at("bus").get<int>()) + ")";
    }
    return s;
}

BusKind parse_kind(Reader const& r) {
    std::string const k = r.string("kind");
    if (k == "slack") return BusKind::Slack;
    if (k == "PV") return BusKind::PV;
    if (k == "PQ") return BusKind::PQ;
    r.fail("unknown bus kind '" + k + "' (expected slack, PV or PQ)");
}

relay::RelayCurve parse_curve(Reader const& r) {
    if (!r.has("curve")) return relay::very_inverse();
    json const& c = r.field("curve");
    if (c.is_string()) {
        auto curve = relay::curve_by_name(c.get<std::string>());
        if (!curve) r.fail("unknown relay curve '" + c.get<std::string>() + "'");
        return *curve;
    }
    Reader cr(c, r.where() + ".curve");
    relay::RelayCurve curve;
    curve.name = cr.has("name") ? cr.string("name") : "custom";
    curve.alpha = cr.number("alpha");
    curve.beta = cr.number("beta");
    curve.gamma = cr.number("gamma");
    return curve;
}

std::vector<double> parse_doubles(Reader const& r, char const* key) {
    json const& arr = r.field(key);
    if (!arr.is_array()) r.fail(std::string("field '") + key + "' must be an array");
    std::vector<double> out;
    for (json const& v : arr) {
        if (!v.is_number()) r.fail(std::string("field '") + key + "' must hold numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

std::vector<bool> parse_bools(Reader const& r, char const* key) {
    json const& arr = r.field(key);
    if (!arr.is_array()) r.fail(std::string("field '") + key + "' must be an array");
    std::vector<bool> out;
    for (json const& v : arr) {
        if (!v.is_boolean()) r.fail(std::string("field '") + key + "' must hold booleans");
        out.push_back(v.get<bool>());
    }
    return out;
}

json curve_to_json(relay::RelayCurve const& curve) {
    if (auto named = relay::curve_by_name(curve.name); named && *named == curve) return curve.name;
    return json{{"name", curve.name}, {"alpha", curve.alpha}, {"beta", curve.beta}, {"gamma", curve.gamma}};
}

}  // namespace

Network load_case(std::istream& source) {
    json doc;
    try {
        doc = json::parse(source);
    } catch (json::parse_error const& e) {
        throw CaseError(std::string("case: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CaseError("case: top level must be an object");

    Network net;
    Reader top(doc, "case");
    net.s_base = top.number("s_base_mva");
    net.f0 = top.number("f0_hz");

    json const& buses = array_field(doc, "buses", true);
    for (std::size_t i = 0; i < buses.size(); ++i) {
        Reader r(buses[i], element("buses", i, buses[i]));
        Bus b;
        b.id = r.integer("id");
        b.kind = parse_kind(r);
        b.base_kv = r.number("base_kv");
        b.v_setpoint = r.number("v_setpoint", 1.0);
        net.buses.push_back(b);
    }

    json const& lines = array_field(doc, "lines", false);
    for (std::size_t k = 0; k < lines.size(); ++k) {
        Reader r(lines[k], element("lines", k, lines[k]));
        Line l;
        l.id = r.integer("id");
        l.from_bus = r.integer("from_bus");
        l.to_bus = r.integer("to_bus");
        l.r = r.number("r");
        l.x = r.number("x");
        l.b_shunt = r.number("b_shunt", 0.0);
        l.rating_amps = r.number("rating_amps");
        l.pickup_current = r.number("pickup_current", l.rating_amps);
        l.curve = parse_curve(r);
        l.in_service = r.boolean("in_service", true);
        net.lines.push_back(std::move(l));
    }

    json const& loads = array_field(doc, "loads", false);
    for (std::size_t i = 0; i < loads.size(); ++i) {
        Reader r(loads[i], element("loads", i, loads[i]));
        Load l;
        l.bus = r.integer("bus");
        l.p0 = r.number("p0");
        l.q0 = r.number("q0");
        if (r.has("stages")) l.stages = parse_doubles(r, "stages");
        l.stage_status = r.has("stage_status") ? parse_bools(r, "stage_status")
                                               : std::vector<bool>(l.stages.size(), true);
        l.kpv = r.number("kpv", kDefaultKpv);
        l.kqv = r.number("kqv", kDefaultKqv);
        l.kpf = r.number("kpf", kDefaultFrequencySensitivityPuPerPu / net.f0);
        net.loads.push_back(std::move(l));
    }

    json const& gens = array_field(doc, "generators", false);
    for (std::size_t g = 0; g < gens.size(); ++g) {
        Reader r(gens[g], element("generators", g, gens[g]));
        Generator gen;
        gen.bus = r.integer("bus");
        gen.p_set = r.number("p_set");
        gen.p_max = r.number("p_max");
        gen.droop = r.number("droop", 0.05);
        gen.inertia_h = r.number("inertia_h");
        gen.mva_base = r.number("mva_base");
        gen.in_service = r.boolean("in_service", true);
        net.generators.push_back(gen);
    }

    if (auto violations = validate(net); !violations.empty()) {
        std::string msg = "case: " + std::to_string(violations.size()) + " violation(s):";
        for (auto const& v : violations) msg += "\n  " + v.element + ": " + v.rule;
        throw CaseError(msg);
    }
    return net;
}

Network load_case_file(std::string const& path) {
    std::ifstream in(path);
    if (!in) throw CaseError("cannot open case file '" + path + "'");
    return load_case(in);
}

void save_case(Network const& network, std::ostream& sink) {
    json doc;
    doc["s_base_mva"] = network.s_base;
    doc["f0_hz"] = network.f0;

    json buses = json::array();
    for (Bus const& b : network.buses) {
        buses.push_back({{"id", b.id}, {"kind", to_string(b.kind)}, {"base_kv", b.base_kv},
                         {"v_setpoint", b.v_setpoint}});
    }
    doc["buses"] = std::move(buses);

    json lines = json::array();
    for (Line const& l : network.lines) {
        lines.push_back({{"id", l.id}, {"from_bus", l.from_bus}, {"to_bus", l.to_bus}, {"r", l.r},
                         {"x", l.x}, {"b_shunt", l.b_shunt}, {"rating_amps", l.rating_amps},
                         {"pickup_current", l.pickup_current}, {"curve", curve_to_json(l.curve)},
                         {"in_service", l.in_service}});
    }
    doc["lines"] = std::move(lines);

    json loads = json::array();
    for (Load const& l : network.loads) {
        loads.push_back({{"bus", l.bus}, {"p0", l.p0}, {"q0", l.q0}, {"stages", l.stages},
                         {"stage_status", l.stage_status}, {"kpv", l.kpv}, {"kqv", l.kqv},
                         {"kpf", l.kpf}});
    }
    doc["loads"] = std::move(loads);

    json gens = json::array();
    for (Generator const& g : network.generators) {
        gens.push_back({{"bus", g.bus}, {"p_set", g.p_set}, {"p_max", g.p_max}, {"droop", g.droop},
                        {"inertia_h", g.inertia_h}, {"mva_base", g.mva_base},
                        {"in_service", g.in_service}});
    }
    doc["generators"] = std::move(gens);

    sink << doc.dump(2) << '\n';
}

std::string serialize_case(Network const& network) {
    std::ostringstream out;
    save_case(network, out);
    return out.str();
}

}  // namespace gridshed
