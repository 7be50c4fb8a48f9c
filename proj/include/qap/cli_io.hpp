#ifndef QAP_CLI_IO_HPP
#define QAP_CLI_IO_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qap/errors.hpp"
#include "qap/particle.hpp"
#include "qap/stationarity.hpp"
#include "qap/string_action.hpp"
#include "qap/string_spectrum.hpp"

namespace qap {

// ---------------------------------------------------------------------------
// Configuration

struct ParticleConfig {
    int dim_space = 3;
    double mass = 0.0;
    std::vector<double> p_spatial;  // empty: zero momentum
    double x0_final = 0.0;
    double hbar = 1.0;
    double c = 1.0;
    int K = 200;
    double epsilon = 0.1;
    double tau = 1.0;
    std::optional<double> T;  // lapse integral for `action`; default T*
    std::vector<double> x_start;  // events for `classical`; default origin
    std::vector<double> x_end;    // default (x0_final, 0, ...)
    bool operator==(const ParticleConfig&) const = default;
};

struct StringConfig {
    int M = 64;
    int K = 200;
    double gamma = 1.0;
    // One entry is broadcast over the sigma grid.
    std::vector<double> N1{1.0};
    std::vector<double> N2{1.0};
    std::vector<double> x0_final{0.0};
    double hbar = 1.0;
    int dim_transverse = 1;
    bool include_zero_point = false;
    std::string mode = "uniform-scale";
    std::string route = "auto";
    bool operator==(const StringConfig&) const = default;
};

struct SweepConfig {
    std::string parameter;
    std::vector<double> values;
    std::string command = "stationary";
    bool operator==(const SweepConfig&) const = default;
};

struct OutputConfig {
    std::string path;             // empty: standard output
    std::string format = "auto";  // csv | json | auto (csv for tables and sweeps)
    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    std::string system = "particle";
    std::string command = "stationary";
    ParticleConfig particle;
    StringConfig string;
    std::vector<long long> occupations;
    std::optional<SweepConfig> sweep;
    OutputConfig output;
    std::map<std::string, double> tolerances;
    int workers = 1;
    bool operator==(const RunConfig&) const = default;
};

inline const std::vector<std::string>& tolerance_names() {
    static const std::vector<std::string> names{"engine", "kkt_rcond", "spectrum"};
    return names;
}

inline double tolerance_or(const RunConfig& c, const std::string& name, double fallback) {
    auto it = c.tolerances.find(name);
    return it == c.tolerances.end() ? fallback : it->second;
}

namespace detail {

using nlohmann::json;

inline void line_column(const std::string& text, std::size_t byte, int& line, int& column) {
    line = 1;
    column = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
}

class Reader {
public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_ + " must be an object", path_);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return node_.contains(key); }
    const json& at(const std::string& key) const { return node_.at(key); }

    void only(const std::vector<std::string>& allowed) const {
        for (const auto& [key, value] : node_.items())
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                throw ConfigError("unknown key '" + field(key) + "'", field(key));
    }

    void number(const std::string& key, double& out) const {
        if (!has(key)) return;
        if (!at(key).is_number()) throw ConfigError(field(key) + " must be a number", field(key));
        out = at(key).get<double>();
    }
    void integer(const std::string& key, int& out) const {
        if (!has(key)) return;
        if (!at(key).is_number_integer()) throw ConfigError(field(key) + " must be an integer", field(key));
        out = at(key).get<int>();
    }
    void boolean(const std::string& key, bool& out) const {
        if (!has(key)) return;
        if (!at(key).is_boolean()) throw ConfigError(field(key) + " must be true or false", field(key));
        out = at(key).get<bool>();
    }
    void text(const std::string& key, std::string& out) const {
        if (!has(key)) return;
        if (!at(key).is_string()) throw ConfigError(field(key) + " must be a string", field(key));
        out = at(key).get<std::string>();
    }
    void numbers(const std::string& key, std::vector<double>& out, bool allow_scalar = false) const {
        if (!has(key)) return;
        const auto& v = at(key);
        if (allow_scalar && v.is_number()) {
            out = {v.get<double>()};
            return;
        }
        if (!v.is_array()) throw ConfigError(field(key) + " must be an array of numbers", field(key));
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError(field(key) + " must contain only numbers", field(key));
            out.push_back(e.get<double>());
        }
    }

private:
    const json& node_;
    std::string path_;
};

inline void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ConfigError(field + ": " + message, field);
}

inline void one_of(const std::string& value, const std::vector<std::string>& options, const std::string& field) {
    if (std::find(options.begin(), options.end(), value) == options.end()) {
        std::string list;
        for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
        throw ConfigError(field + ": '" + value + "' is not one of {" + list + "}", field);
    }
}

inline Vector broadcast(const std::vector<double>& v, int M) {
    if (v.size() == 1) return Vector::Constant(M, v[0]);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline const std::vector<std::string>& particle_commands() {
    static const std::vector<std::string> c{"classical", "phase", "action", "stationary"};
    return c;
}
inline const std::vector<std::string>& string_commands() {
    static const std::vector<std::string> c{"action", "spectrum", "stationary"};
    return c;
}
inline const std::vector<std::string>& particle_sweepable() {
    static const std::vector<std::string> c{"mass", "x0_final", "hbar", "c", "K", "epsilon", "tau", "T"};
    return c;
}
inline const std::vector<std::string>& string_sweepable() {
    static const std::vector<std::string> c{"M", "K", "gamma", "N1", "N2", "x0_final", "hbar", "dim_transverse"};
    return c;
}

}  // namespace detail

inline ParticleScenario to_scenario(const ParticleConfig& p) {
    ParticleScenario s;
    s.dim_space = p.dim_space;
    s.mass = p.mass;
    s.p_spatial = p.p_spatial.empty() ? Vector::Zero(p.dim_space)
                                      : Vector(Eigen::Map<const Vector>(p.p_spatial.data(),
                                                                        static_cast<Eigen::Index>(p.p_spatial.size())));
    s.x0_final = p.x0_final;
    s.hbar = p.hbar;
    s.c = p.c;
    return s;
}

inline StringScenario to_scenario(const StringConfig& c) {
    StringScenario s;
    s.M = c.M;
    s.K = c.K;
    s.gamma = c.gamma;
    s.N1 = detail::broadcast(c.N1, c.M);
    s.N2 = detail::broadcast(c.N2, c.M);
    s.x0_final = detail::broadcast(c.x0_final, c.M);
    s.hbar = c.hbar;
    return s;
}

inline StationarityMode parse_mode(const std::string& m) {
    if (m == "uniform-scale") return StationarityMode::uniform_scale;
    if (m == "two-scalars") return StationarityMode::two_scalars;
    if (m == "sigma-fields") return StationarityMode::sigma_fields;
    throw ConfigError("string.mode: unknown stationarity mode '" + m + "'", "string.mode");
}

inline KktRoute parse_route(const std::string& r) {
    if (r == "auto") return KktRoute::automatic;
    if (r == "dense") return KktRoute::dense;
    if (r == "fourier") return KktRoute::fourier;
    throw ConfigError("string.route: unknown route '" + r + "'", "string.route");
}

/// Checks every physical parameter and names the offending field.
inline void validate_config(const RunConfig& c) {
    using detail::require;
    detail::one_of(c.system, {"particle", "string"}, "system");
    const auto& commands = c.system == "particle" ? detail::particle_commands() : detail::string_commands();
    auto with_sweep = commands;
    with_sweep.push_back("sweep");
    detail::one_of(c.command, with_sweep, "command");
    require(c.workers >= 1, "workers", "must be >= 1");
    detail::one_of(c.output.format, {"auto", "csv", "json"}, "output.format");
    for (const auto& [name, value] : c.tolerances) {
        detail::one_of(name, tolerance_names(), "tolerances");
        require(value > 0.0 && std::isfinite(value), "tolerances." + name, "must be a positive number");
    }
    for (auto n : c.occupations) require(n >= 0, "occupations", "entries must be nonnegative");

    if (c.system == "particle") {
        const auto& p = c.particle;
        require(p.dim_space >= 1, "particle.dim_space", "must be >= 1");
        require(p.mass >= 0.0 && std::isfinite(p.mass), "particle.mass", "must be a finite nonnegative number");
        require(p.p_spatial.empty() || static_cast<int>(p.p_spatial.size()) == p.dim_space, "particle.p_spatial",
                "must have dim_space entries");
        require(std::isfinite(p.x0_final), "particle.x0_final", "must be finite");
        require(p.hbar > 0.0, "particle.hbar", "must be positive");
        require(p.c > 0.0, "particle.c", "must be positive");
        require(p.K >= 2, "particle.K", "must be >= 2");
        require(p.epsilon > 0.0, "particle.epsilon", "must be positive");
        require(p.tau >= 0.0 && p.tau <= 1.0, "particle.tau", "must lie in [0,1]");
        require(!p.T || *p.T > 0.0, "particle.T", "must be positive");
        require(p.x_start.empty() || static_cast<int>(p.x_start.size()) == p.dim_space + 1, "particle.x_start",
                "must have dim_space + 1 entries");
        require(p.x_end.empty() || static_cast<int>(p.x_end.size()) == p.dim_space + 1, "particle.x_end",
                "must have dim_space + 1 entries");
    } else {
        const auto& s = c.string;
        require(s.M == 1 || (s.M >= 2 && s.M % 2 == 0), "string.M", "must be 1 or a positive even number");
        require(s.K >= 3, "string.K", "must be >= 3");
        require(s.gamma >= 0.0 && std::isfinite(s.gamma), "string.gamma", "must be a finite nonnegative number");
        auto field_ok = [&](const std::vector<double>& v) {
            return v.size() == 1 || static_cast<int>(v.size()) == s.M;
        };
        require(field_ok(s.N1), "string.N1", "must be a number or an array of length M");
        require(field_ok(s.N2), "string.N2", "must be a number or an array of length M");
        require(field_ok(s.x0_final), "string.x0_final", "must be a number or an array of length M");
        for (double v : s.N1) require(v > 0.0 && std::isfinite(v), "string.N1", "must be strictly positive");
        for (double v : s.N2) require(v > 0.0 && std::isfinite(v), "string.N2", "must be strictly positive");
        for (double v : s.x0_final) require(std::isfinite(v), "string.x0_final", "must be finite");
        require(s.hbar > 0.0, "string.hbar", "must be positive");
        require(s.dim_transverse >= 1, "string.dim_transverse", "must be >= 1");
        (void)parse_mode(s.mode);
        (void)parse_route(s.route);
    }
    if (c.command == "sweep") {
        require(c.sweep.has_value(), "sweep", "a sweep block is required for the sweep command");
        const auto& sw = *c.sweep;
        detail::one_of(sw.command, commands, "sweep.command");
        detail::one_of(sw.parameter,
                       c.system == "particle" ? detail::particle_sweepable() : detail::string_sweepable(),
                       "sweep.parameter");
    }
}

/// The configs of the individual runs of a sweep, in sweep order.
inline std::vector<RunConfig> expand_sweep(const RunConfig& c) {
    if (c.command != "sweep") return {c};
    if (!c.sweep) throw ConfigError("sweep: a sweep block is required", "sweep");
    std::vector<RunConfig> out;
    for (double v : c.sweep->values) {
        RunConfig r = c;
        r.command = c.sweep->command;
        r.sweep.reset();
        const auto& name = c.sweep->parameter;
        auto as_int = [&](int& slot) {
            if (v != std::floor(v)) throw ConfigError("sweep.values: " + name + " takes integer values", "sweep.values");
            slot = static_cast<int>(v);
        };
        if (c.system == "particle") {
            auto& p = r.particle;
            if (name == "mass") p.mass = v;
            else if (name == "x0_final") p.x0_final = v;
            else if (name == "hbar") p.hbar = v;
            else if (name == "c") p.c = v;
            else if (name == "K") as_int(p.K);
            else if (name == "epsilon") p.epsilon = v;
            else if (name == "tau") p.tau = v;
            else if (name == "T") p.T = v;
        } else {
            auto& s = r.string;
            if (name == "M") as_int(s.M);
            else if (name == "K") as_int(s.K);
            else if (name == "gamma") s.gamma = v;
            else if (name == "N1") s.N1 = {v};
            else if (name == "N2") s.N2 = {v};
            else if (name == "x0_final") s.x0_final = {v};
            else if (name == "hbar") s.hbar = v;
            else if (name == "dim_transverse") as_int(s.dim_transverse);
        }
        validate_config(r);
        out.push_back(std::move(r));
    }
    return out;
}

inline RunConfig parse_config(const std::string& text) {
    using detail::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        int line = 0, column = 0;
        detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1, line, column);
        throw ConfigError("parse error at line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                              e.what(),
                          "", line, column);
    }
    RunConfig c;
    const detail::Reader top(root, "");
    top.only({"system", "command", "particle", "string", "occupations", "sweep", "output", "tolerances", "workers"});
    top.text("system", c.system);
    top.text("command", c.command);
    top.integer("workers", c.workers);

    if (top.has("particle")) {
        const detail::Reader r(top.at("particle"), "particle");
        r.only({"dim_space", "mass", "p_spatial", "x0_final", "hbar", "c", "K", "epsilon", "tau", "T", "x_start",
                "x_end"});
        auto& p = c.particle;
        r.integer("dim_space", p.dim_space);
        r.number("mass", p.mass);
        r.numbers("p_spatial", p.p_spatial);
        r.number("x0_final", p.x0_final);
        r.number("hbar", p.hbar);
        r.number("c", p.c);
        r.integer("K", p.K);
        r.number("epsilon", p.epsilon);
        r.number("tau", p.tau);
        if (r.has("T") && !r.at("T").is_null()) {
            double t = 0.0;
            r.number("T", t);
            p.T = t;
        }
        r.numbers("x_start", p.x_start);
        r.numbers("x_end", p.x_end);
    }
    if (top.has("string")) {
        const detail::Reader r(top.at("string"), "string");
        r.only({"M", "K", "gamma", "N1", "N2", "x0_final", "hbar", "dim_transverse", "include_zero_point", "mode",
                "route"});
        auto& s = c.string;
        r.integer("M", s.M);
        r.integer("K", s.K);
        r.number("gamma", s.gamma);
        r.numbers("N1", s.N1, true);
        r.numbers("N2", s.N2, true);
        r.numbers("x0_final", s.x0_final, true);
        r.number("hbar", s.hbar);
        r.integer("dim_transverse", s.dim_transverse);
        r.boolean("include_zero_point", s.include_zero_point);
        r.text("mode", s.mode);
        r.text("route", s.route);
    }
    if (top.has("occupations")) {
        const auto& v = top.at("occupations");
        if (!v.is_array()) throw ConfigError("occupations must be an array of integers", "occupations");
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw ConfigError("occupations must be an array of integers", "occupations");
            c.occupations.push_back(e.get<long long>());
        }
    }
    if (top.has("sweep") && !top.at("sweep").is_null()) {
        const detail::Reader r(top.at("sweep"), "sweep");
        r.only({"parameter", "values", "command"});
        SweepConfig sw;
        r.text("parameter", sw.parameter);
        r.numbers("values", sw.values);
        r.text("command", sw.command);
        c.sweep = sw;
    }
    if (top.has("output")) {
        const detail::Reader r(top.at("output"), "output");
        r.only({"path", "format"});
        r.text("path", c.output.path);
        r.text("format", c.output.format);
    }
    if (top.has("tolerances")) {
        const auto& t = top.at("tolerances");
        if (!t.is_object()) throw ConfigError("tolerances must be an object", "tolerances");
        for (const auto& [name, value] : t.items()) {
            if (!value.is_number()) throw ConfigError("tolerances." + name + " must be a number", "tolerances." + name);
            c.tolerances[name] = value.get<double>();
        }
    }
    validate_config(c);
    if (c.command == "sweep") (void)expand_sweep(c);
    return c;
}

/// Canonical JSON text of a config; parse_config inverts it exactly.
inline std::string emit_config(const RunConfig& c) {
    using detail::json;
    auto scalar_or_array = [](const std::vector<double>& v) { return v.size() == 1 ? json(v[0]) : json(v); };
    json p = {{"dim_space", c.particle.dim_space}, {"mass", c.particle.mass},    {"p_spatial", c.particle.p_spatial},
              {"x0_final", c.particle.x0_final},   {"hbar", c.particle.hbar},    {"c", c.particle.c},
              {"K", c.particle.K},                 {"epsilon", c.particle.epsilon}, {"tau", c.particle.tau},
              {"T", c.particle.T ? json(*c.particle.T) : json(nullptr)},
              {"x_start", c.particle.x_start},     {"x_end", c.particle.x_end}};
    json s = {{"M", c.string.M},
              {"K", c.string.K},
              {"gamma", c.string.gamma},
              {"N1", scalar_or_array(c.string.N1)},
              {"N2", scalar_or_array(c.string.N2)},
              {"x0_final", scalar_or_array(c.string.x0_final)},
              {"hbar", c.string.hbar},
              {"dim_transverse", c.string.dim_transverse},
              {"include_zero_point", c.string.include_zero_point},
              {"mode", c.string.mode},
              {"route", c.string.route}};
    json root = {{"system", c.system},
                 {"command", c.command},
                 {"particle", p},
                 {"string", s},
                 {"occupations", c.occupations},
                 {"output", {{"path", c.output.path}, {"format", c.output.format}}},
                 {"tolerances", c.tolerances},
                 {"workers", c.workers}};
    root["sweep"] = c.sweep ? json{{"parameter", c.sweep->parameter},
                                   {"values", c.sweep->values},
                                   {"command", c.sweep->command}}
                            : json(nullptr);
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Results

using Value = std::variant<long long, double, bool, std::string>;
using Record = std::vector<std::pair<std::string, Value>>;

struct RunResult {
    Record header;
    std::vector<Record> records;
    bool tabular = false;
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline Record particle_record(const RunConfig& c) {
    const auto& pc = c.particle;
    const auto scenario = to_scenario(pc);
    scenario.validate();
    Record r;
    if (c.command == "stationary") {
        const auto st = stationary_particle(scenario);
        r = {{"T_star", st.T_star},
             {"p0_star", st.p0_star},
             {"lambda_star", st.lambda_star},
             {"lambda_closed_form", st.lambda_closed_form},
             {"degenerate_dispersion", st.degenerate_dispersion},
             {"evaluations", static_cast<long long>(st.evaluations)}};
    } else if (c.command == "classical") {
        const int D = pc.dim_space + 1;
        Vector a = pc.x_start.empty() ? Vector::Zero(D)
                                      : Vector(Eigen::Map<const Vector>(pc.x_start.data(), D));
        Vector b = Vector::Zero(D);
        if (pc.x_end.empty()) b(0) = pc.x0_final;
        else b = Eigen::Map<const Vector>(pc.x_end.data(), D);
        const double T = stationary_proper_time(a, b, scenario);
        const double argmin = minimize_constant_lapse(a, b, scenario, pc.K);
        const double action =
            classical_action_lagrangian(straight_worldline(a, b, pc.K), Vector::Constant(pc.K + 1, argmin), scenario);
        r = {{"interval_squared", minkowski_square(b - a)},
             {"T_formula", T},
             {"T_argmin", argmin},
             {"action_at_argmin", action}};
    } else {
        double T = 0.0;
        if (pc.T) {
            T = *pc.T;
        } else {
            const auto st = stationary_particle(scenario);
            if (!(st.T_star > 0.0)) throw DomainError("no positive stationary T for this scenario; set particle.T");
            T = st.T_star;
        }
        const auto path = stationary_path(scenario, Vector::Constant(pc.K + 1, T));
        if (c.command == "action") {
            const auto a = quantum_action_particle(path, scenario);
            r = {{"T", T},
                 {"p0", path.p0},
                 {"lambda", a.lambda},
                 {"constraint_residual", a.constraint_residual},
                 {"plane_wave_phase", a.plane_wave_phase},
                 {"damping", a.damping(pc.epsilon)},
                 {"reduced_action", reduced_action(T, scenario)}};
        } else {
            const auto ph = phase_evolution(path, pc.epsilon, pc.tau, pc.hbar);
            r = {{"T", T},
                 {"tau", pc.tau},
                 {"epsilon", ph.epsilon},
                 {"chi0_re", ph.chi0.real()},
                 {"chi0_im", ph.chi0.imag()},
                 {"chi1_re", ph.chi1.real()},
                 {"chi1_im", ph.chi1.imag()},
                 {"chi2_re", ph.chi2.real()},
                 {"chi2_im", ph.chi2.imag()}};
        }
    }
    return r;
}

inline std::vector<Record> string_records(const RunConfig& c) {
    const auto scenario = to_scenario(c.string);
    scenario.validate();
    const SpectrumSettings settings{c.string.dim_transverse, c.string.include_zero_point};
    if (c.command == "spectrum") {
        const auto sp = normal_modes(scenario, build_hamiltonian_matrix(scenario, settings.dim_transverse),
                                     {.tolerance = tolerance_or(c, "spectrum", 1e-11),
                                      .include_zero_point = settings.include_zero_point});
        std::vector<Record> rows;
        for (std::size_t i = 0; i < sp.size(); ++i)
            rows.push_back({{"k", static_cast<long long>(sp.k[i])},
                            {"family", std::string(family_name(sp.families[i]))},
                            {"omega", sp.frequencies[i]},
                            {"direction", static_cast<long long>(sp.direction[i])}});
        return rows;
    }
    if (c.command == "action") {
        X0SolveOptions o;
        o.route = parse_route(c.string.route);
        o.rcond_floor = tolerance_or(c, "kkt_rcond", 1e-13);
        const auto st = stationary_x0_solve(scenario, o);
        Record r{{"lambda_x0_star", st.lambda_star},
                 {"route", std::string(st.route == KktRoute::dense ? "dense" : "fourier")},
                 {"unknowns", static_cast<long long>(st.unknowns)},
                 {"min_rcond", st.min_rcond},
                 {"p0_mean", st.field.p0.mean()},
                 {"constraint_residual", boundary_constraint_residual(scenario, st.field).cwiseAbs().maxCoeff()}};
        if (scenario.K >= 3) {
            const auto adj = adjudicate_transport(scenario, st.field);
            r.emplace_back("transport_residual_derived", adj.transport_derived.max());
            r.emplace_back("transport_residual_printed", adj.transport_printed.max());
            r.emplace_back("initial_residual_derived", adj.initial_derived.max());
            r.emplace_back("initial_residual_printed", adj.initial_printed.max());
            r.emplace_back("preferred_convention",
                           std::string(adj.preferred() == TransportConvention::derived ? "derived" : "printed"));
        }
        return {r};
    }
    EngineOptions o;
    o.mode = parse_mode(c.string.mode);
    o.spectrum = settings;
    o.tolerance = tolerance_or(c, "engine", 1e-7);
    const auto st = find_stationary_N(scenario, c.occupations, o);
    return {{{"mode", std::string(mode_name(st.mode))},
             {"lambda_star", st.lambda_star},
             {"W_n", st.W_n},
             {"lambda_x0", st.lambda_x0},
             {"lambda_xi", st.lambda_xi},
             {"energy", st.energy},
             {"closed_form", st.closed_form},
             {"start_scale", st.start_scale},
             {"N1_star_mean", st.N1_star.mean()},
             {"N2_star_mean", st.N2_star.mean()},
             {"converged", st.converged},
             {"gradient_norm", st.gradient_norm},
             {"hessian_positive", static_cast<long long>(st.hessian_signature.positive)},
             {"hessian_negative", static_cast<long long>(st.hessian_signature.negative)},
             {"hessian_zero", static_cast<long long>(st.hessian_signature.zero)},
             {"spatial_sign_flipped", st.spatial_sign_flipped},
             {"iterations", static_cast<long long>(st.iterations)},
             {"evaluations", static_cast<long long>(st.evaluations)}}};
}

inline std::vector<Record> single_run(const RunConfig& c) {
    if (c.system == "particle") return {particle_record(c)};
    return string_records(c);
}

inline Record make_header(const RunConfig& c) {
    Record h{{"system", c.system}, {"command", c.command}};
    if (c.system == "particle") {
        h.emplace_back("K", static_cast<long long>(c.particle.K));
        h.emplace_back("hbar", c.particle.hbar);
        h.emplace_back("c", c.particle.c);
    } else {
        h.emplace_back("M", static_cast<long long>(c.string.M));
        h.emplace_back("K", static_cast<long long>(c.string.K));
        h.emplace_back("gamma", c.string.gamma);
        h.emplace_back("dim_transverse", static_cast<long long>(c.string.dim_transverse));
        h.emplace_back("include_zero_point", c.string.include_zero_point);
        h.emplace_back("tolerance_engine", tolerance_or(c, "engine", 1e-7));
        h.emplace_back("tolerance_kkt_rcond", tolerance_or(c, "kkt_rcond", 1e-13));
        h.emplace_back("tolerance_spectrum", tolerance_or(c, "spectrum", 1e-11));
    }
    if (c.sweep) {
        h.emplace_back("sweep_parameter", c.sweep->parameter);
        h.emplace_back("sweep_command", c.sweep->command);
        h.emplace_back("sweep_entries", static_cast<long long>(c.sweep->values.size()));
    }
    return h;
}

}  // namespace detail

/// Executes a config. Sweep entries run on up to `workers` threads; records
/// are ordered by sweep index whatever the completion order. The first
/// failing entry (by index) is rethrown.
inline RunResult run(const RunConfig& config) {
    validate_config(config);
    RunResult out;
    out.header = detail::make_header(config);
    const std::string effective = config.command == "sweep" ? config.sweep->command : config.command;
    out.tabular = config.command == "sweep" || effective == "spectrum";
    if (config.command != "sweep") {
        out.records = detail::single_run(config);
        return out;
    }

    const auto entries = expand_sweep(config);
    std::vector<std::vector<Record>> results(entries.size());
    std::vector<std::exception_ptr> errors(entries.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
            try {
                results[i] = detail::single_run(entries[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), entries.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    if (n_threads > 0) worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (auto& rec : results[i]) {
            Record row{{"index", static_cast<long long>(i)}, {config.sweep->parameter, config.sweep->values[i]}};
            row.insert(row.end(), rec.begin(), rec.end());
            out.records.push_back(std::move(row));
        }
    }
    return out;
}

namespace detail {

inline std::string csv_cell(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, double>) return format_double(x);
            else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, long long>) return std::to_string(x);
            else return x;
        },
        v);
}

inline std::string json_value(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, double>) return std::isfinite(x) ? format_double(x) : "null";
            else if constexpr (std::is_same_v<T, bool>) return x ? "true" : "false";
            else if constexpr (std::is_same_v<T, long long>) return std::to_string(x);
            else return nlohmann::json(x).dump();
        },
        v);
}

inline std::string json_object(const Record& r, const std::string& indent) {
    std::string s = "{";
    for (std::size_t i = 0; i < r.size(); ++i) {
        s += (i ? ",\n" : "\n") + indent + "  " + nlohmann::json(r[i].first).dump() + ": " + json_value(r[i].second);
    }
    return s + (r.empty() ? "}" : "\n" + indent + "}");
}

}  // namespace detail

/// "# key: value" header lines, a column line, then one row per record.
/// Columns follow first appearance across records.
inline std::string emit_csv(const RunResult& r) {
    std::string s;
    for (const auto& [k, v] : r.header) s += "# " + k + ": " + detail::csv_cell(v) + "\n";
    std::vector<std::string> columns;
    for (const auto& rec : r.records)
        for (const auto& [k, v] : rec)
            if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
    for (std::size_t i = 0; i < columns.size(); ++i) s += (i ? "," : "") + columns[i];
    if (!columns.empty()) s += "\n";
    for (const auto& rec : r.records) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            auto it = std::find_if(rec.begin(), rec.end(), [&](const auto& kv) { return kv.first == columns[i]; });
            s += (i ? "," : "") + (it == rec.end() ? std::string() : detail::csv_cell(it->second));
        }
        s += "\n";
    }
    return s;
}

inline std::string emit_json(const RunResult& r) {
    std::string s = "{\n  \"header\": " + detail::json_object(r.header, "  ") + ",\n  \"records\": [";
    for (std::size_t i = 0; i < r.records.size(); ++i) s += (i ? ",\n    " : "\n    ") + detail::json_object(r.records[i], "    ");
    s += r.records.empty() ? "]\n}\n" : "\n  ]\n}\n";
    return s;
}

inline std::string emit(const RunResult& r, const std::string& format) {
    if (format == "csv" || (format == "auto" && r.tabular)) return emit_csv(r);
    if (format == "json" || format == "auto") return emit_json(r);
    throw ConfigError("output.format: unknown format '" + format + "'", "output.format");
}

/// Process exit code for an error: 2 validation, 3 numerical failure, 4 I/O.
inline int exit_code_for(const Error& e) {
    const std::string kind = e.kind();
    if (kind == "ConfigError" || kind == "DomainError" || kind == "ShapeError") return 2;
    return 3;
}

inline std::string error_object(const std::string& kind, const std::string& message, int code,
                                const ConfigError* config = nullptr) {
    nlohmann::ordered_json e = {{"kind", kind}, {"message", message}, {"exit_code", code}};
    if (config) {
        e["field"] = config->field();
        e["line"] = config->line();
        e["column"] = config->column();
    }
    return nlohmann::ordered_json{{"error", e}}.dump() + "\n";
}

}  // namespace qap

#endif  // QAP_CLI_IO_HPP
