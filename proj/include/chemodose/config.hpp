#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chemodose/io.hpp"
#include "chemodose/objective.hpp"
#include "chemodose/optimizer.hpp"
#include "chemodose/verification.hpp"

namespace chemodose {

/// Configuration error; line() is 0 when no single line is at fault.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(int line, const std::string& msg)
        : std::invalid_argument(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

enum class FieldSource { Constant, File, TanhSeed, Manufactured };

/// A field given as a number, `file:<path>`, `tanh-seed` or `manufactured`.
struct FieldSpec {
    FieldSource kind = FieldSource::Constant;
    double value = 0.0;
    std::string path;
};

struct RunConfig {
    // [grid]
    int dim = 1;
    int nx = 128;
    int ny = 128;
    double lx = 1.0;
    double ly = 1.0;
    // [time]
    double t_end = 1.0;
    double dt = 5e-3;
    // [model]
    ModelParams params;
    double stabilization = 2.0;
    // [initial]
    FieldSpec phi0{FieldSource::TanhSeed, 0.0, {}};
    double seed_radius = 0.25;
    double seed_width = -1.0;  ///< negative: sqrt(B/A)
    FieldSpec sigma0{FieldSource::Constant, 1.0, {}};
    FieldSpec sigmaS{FieldSource::Constant, 1.0, {}};
    // [objective]
    double beta_Q = 1.0;
    double beta_Omega = 0.5;
    double beta_S = 0.1;
    double beta_u = 0.1;
    double beta_T = 0.05;
    double r_relax = 0.05;
    FieldSpec phi_Q{FieldSource::Constant, -1.0, {}};
    FieldSpec phi_Omega{FieldSource::Constant, -1.0, {}};
    bool include_btau_term = false;
    double tau_tol = -1.0;
    // [manufactured]
    double dagger_base = 0.5;
    double dagger_amplitude = 0.3;
    // [control]
    std::string control_init = "constant";
    double control_value = 0.0;
    double control_amplitude = 0.3;
    // [optimizer]
    OptimizerConfig optimizer;
    double fixed_tau = -1.0;  ///< negative: final time
    // [solver]
    LinearSolverOptions linear;
    // [verify]
    int verify_random_runs = 10;
    int verify_directions = 5;
    // [run]
    unsigned long long seed = 0;

    std::filesystem::path base_dir;  ///< relative file paths resolve against this
    std::string source_text;

    Grid grid() const { return dim == 1 ? Grid::line(nx, lx) : Grid::box(nx, ny, lx, ly); }
    TimeGrid timegrid() const { return TimeGrid(t_end, static_cast<int>(std::lround(t_end / dt))); }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const RunConfig& cfg) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(cfg.source_text)));
    return buf;
}

/// Key reference printed by `--help`.
inline std::string config_reference() {
    return R"(Config file: [section] headers, `key = value` lines, `#` comments.
Fields accept a number, file:<path> (FIELD v1), and where noted tanh-seed or manufactured.

[grid]       dim = 1            nx = 128   ny = 128   lx = 1   ly = 1
[time]       t_end = 1          dt = 0.005
[model]      proliferation = 1  apoptosis = 0.5  consumption = 1  supply = 1
             alpha = 2          A = 1   B = 0.001   stabilization = 2
[initial]    phi0 = tanh-seed   seed_radius = 0.25  seed_width = sqrt(B/A)
             sigma0 = 1         sigmaS = 1           (both within [0, 1])
[objective]  beta_Q = 1  beta_Omega = 0.5  beta_S = 0.1  beta_u = 0.1  beta_T = 0.05
             r_relax = 0.05 (integer multiple of dt)
             phi_Q = -1  phi_Omega = -1  (also manufactured)
             include_btau_term = false   tau_tol = 1e-3 (beta_T + 1)
[manufactured] base = 0.5  amplitude = 0.3
             reference dose base + amplitude sin(pi t/T) cos(pi x/lx) [cos(pi y/ly)]
[control]    init = constant | random   value = 0   amplitude = 0.3
[optimizer]  max_outer_iters = 200  initial_step = 1  shrink = 0.5  slope = 1e-4
             max_backtracks = 30  stationarity_tol = 1e-4  spectral_steps = true
             tau_mode = scan | fixed   tau = t_end (fixed mode)
[solver]     linear = direct | cg   cg_rel_tol = 1e-10   cg_iter_factor = 10
[verify]     random_runs = 10   directions = 5
[run]        seed = 0
)";
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(line, key + ": expected a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, int line, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(line, key + ": expected an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(line, key + ": expected true or false, got '" + v + "'");
}

inline FieldSpec parse_field(const std::string& v, int line, const std::string& key, bool allow_seed,
                             bool allow_manufactured) {
    if (v.rfind("file:", 0) == 0) {
        if (v.size() == 5) throw ConfigError(line, key + ": empty file path");
        return {FieldSource::File, 0.0, v.substr(5)};
    }
    if (v == "tanh-seed") {
        if (!allow_seed) throw ConfigError(line, key + ": tanh-seed is only available for phi0");
        return {FieldSource::TanhSeed, 0.0, {}};
    }
    if (v == "manufactured") {
        if (!allow_manufactured) throw ConfigError(line, key + ": manufactured is only available for targets");
        return {FieldSource::Manufactured, 0.0, {}};
    }
    return {FieldSource::Constant, parse_double(v, line, key), {}};
}

inline std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline bool is_step_multiple(double span, double dt) {
    const double m = span / dt;
    return std::abs(m - std::round(m)) <= 1e-9 * std::max(1.0, m) && std::round(m) >= 1.0;
}

}  // namespace detail

/// Parses configuration text. `base_dir` anchors relative `file:` paths.
inline RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    c.base_dir = base_dir;
    c.source_text = text;
    std::map<std::string, int> seen;  // "section.key" -> line

    using Setter = std::function<void(const std::string&, int)>;
    const auto num = [](double& dst, const char* key) {
        return Setter([&dst, key](const std::string& v, int ln) { dst = detail::parse_double(v, ln, key); });
    };
    const auto integer = [](int& dst, const char* key) {
        return Setter([&dst, key](const std::string& v, int ln) {
            const long long x = detail::parse_int(v, ln, key);
            if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(ln, std::string(key) + ": out of range");
            dst = static_cast<int>(x);
        });
    };
    const auto flag = [](bool& dst, const char* key) {
        return Setter([&dst, key](const std::string& v, int ln) { dst = detail::parse_bool(v, ln, key); });
    };
    const auto field = [](FieldSpec& dst, const char* key, bool seed, bool manu) {
        return Setter([&dst, key, seed, manu](const std::string& v, int ln) {
            dst = detail::parse_field(v, ln, key, seed, manu);
        });
    };

    OptimizerConfig& oc = c.optimizer;
    const std::map<std::string, std::map<std::string, Setter>> table{
        {"grid",
         {{"dim", integer(c.dim, "dim")},
          {"nx", integer(c.nx, "nx")},
          {"ny", integer(c.ny, "ny")},
          {"lx", num(c.lx, "lx")},
          {"ly", num(c.ly, "ly")}}},
        {"time", {{"t_end", num(c.t_end, "t_end")}, {"dt", num(c.dt, "dt")}}},
        {"model",
         {{"proliferation", num(c.params.proliferation, "proliferation")},
          {"apoptosis", num(c.params.apoptosis, "apoptosis")},
          {"consumption", num(c.params.consumption, "consumption")},
          {"supply", num(c.params.supply, "supply")},
          {"alpha", num(c.params.alpha, "alpha")},
          {"A", num(c.params.A, "A")},
          {"B", num(c.params.B, "B")},
          {"stabilization", num(c.stabilization, "stabilization")}}},
        {"initial",
         {{"phi0", field(c.phi0, "phi0", true, false)},
          {"seed_radius", num(c.seed_radius, "seed_radius")},
          {"seed_width", num(c.seed_width, "seed_width")},
          {"sigma0", field(c.sigma0, "sigma0", false, false)},
          {"sigmaS", field(c.sigmaS, "sigmaS", false, false)}}},
        {"objective",
         {{"beta_Q", num(c.beta_Q, "beta_Q")},
          {"beta_Omega", num(c.beta_Omega, "beta_Omega")},
          {"beta_S", num(c.beta_S, "beta_S")},
          {"beta_u", num(c.beta_u, "beta_u")},
          {"beta_T", num(c.beta_T, "beta_T")},
          {"r_relax", num(c.r_relax, "r_relax")},
          {"phi_Q", field(c.phi_Q, "phi_Q", false, true)},
          {"phi_Omega", field(c.phi_Omega, "phi_Omega", false, true)},
          {"include_btau_term", flag(c.include_btau_term, "include_btau_term")},
          {"tau_tol", num(c.tau_tol, "tau_tol")}}},
        {"manufactured", {{"base", num(c.dagger_base, "base")}, {"amplitude", num(c.dagger_amplitude, "amplitude")}}},
        {"control",
         {{"init",
           [&c](const std::string& v, int ln) {
               if (v != "constant" && v != "random") throw ConfigError(ln, "init: expected constant or random");
               c.control_init = v;
           }},
          {"value", num(c.control_value, "value")},
          {"amplitude", num(c.control_amplitude, "amplitude")}}},
        {"optimizer",
         {{"max_outer_iters", integer(oc.max_outer_iters, "max_outer_iters")},
          {"initial_step", num(oc.initial_step, "initial_step")},
          {"shrink", num(oc.shrink, "shrink")},
          {"slope", num(oc.slope, "slope")},
          {"max_backtracks", integer(oc.max_backtracks, "max_backtracks")},
          {"stationarity_tol", num(oc.stationarity_tol, "stationarity_tol")},
          {"spectral_steps", flag(oc.spectral_steps, "spectral_steps")},
          {"tau_mode",
           [&oc](const std::string& v, int ln) {
               if (v == "scan")
                   oc.tau_mode = TauMode::Scan;
               else if (v == "fixed")
                   oc.tau_mode = TauMode::Fixed;
               else
                   throw ConfigError(ln, "tau_mode: expected scan or fixed");
           }},
          {"tau", num(c.fixed_tau, "tau")}}},
        {"solver",
         {{"linear",
           [&c](const std::string& v, int ln) {
               if (v == "direct")
                   c.linear.kind = LinearSolverKind::Direct;
               else if (v == "cg")
                   c.linear.kind = LinearSolverKind::ConjugateGradient;
               else
                   throw ConfigError(ln, "linear: expected direct or cg");
           }},
          {"cg_rel_tol", num(c.linear.cg_rel_tol, "cg_rel_tol")},
          {"cg_iter_factor", integer(c.linear.cg_iter_factor, "cg_iter_factor")}}},
        {"verify",
         {{"random_runs", integer(c.verify_random_runs, "random_runs")},
          {"directions", integer(c.verify_directions, "directions")}}},
        {"run",
         {{"seed",
           [&c](const std::string& v, int ln) {
               const long long s = detail::parse_int(v, ln, "seed");
               if (s < 0) throw ConfigError(ln, "seed must be nonnegative");
               c.seed = static_cast<unsigned long long>(s);
           }}}},
    };

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int ln = 0;
    while (std::getline(in, raw)) {
        ++ln;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(ln, "malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!table.count(section)) throw ConfigError(ln, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(ln, "expected `key = value`");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(ln, "key '" + key + "' appears before any [section]");
        const auto& keys = table.at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError(ln, "unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) throw ConfigError(ln, "missing value for '" + key + "'");
        const std::string full = section + "." + key;
        if (seen.count(full))
            throw ConfigError(ln, "duplicate key '" + key + "' (first set on line " + std::to_string(seen[full]) + ")");
        seen[full] = ln;
        it->second(value, ln);
    }

    const auto line_of = [&](const char* full) {
        const auto f = seen.find(full);
        return f == seen.end() ? 0 : f->second;
    };

    // Structural and range checks.
    if (c.dim != 1 && c.dim != 2) throw ConfigError(line_of("grid.dim"), "dim must be 1 or 2");
    if (c.nx < 4) throw ConfigError(line_of("grid.nx"), "nx must be at least 4");
    if (c.dim == 2 && c.ny < 4) throw ConfigError(line_of("grid.ny"), "ny must be at least 4");
    if (!(c.lx > 0)) throw ConfigError(line_of("grid.lx"), "lx must be positive");
    if (!(c.ly > 0)) throw ConfigError(line_of("grid.ly"), "ly must be positive");
    if (!(c.t_end > 0)) throw ConfigError(line_of("time.t_end"), "t_end must be positive");
    if (!(c.dt > 0)) throw ConfigError(line_of("time.dt"), "dt must be positive");
    if (!detail::is_step_multiple(c.t_end, c.dt) || std::lround(c.t_end / c.dt) < 2)
        throw ConfigError(line_of("time.dt"), "t_end must be an integer multiple (at least 2) of dt");
    if (!(c.r_relax > 0)) throw ConfigError(line_of("objective.r_relax"), "r_relax must be positive");
    if (!detail::is_step_multiple(c.r_relax, c.dt))
        throw ConfigError(line_of("objective.r_relax") ? line_of("objective.r_relax") : line_of("time.dt"),
                          "r_relax = " + detail::fmt_short(c.r_relax) + " is not an integer multiple of dt = " +
                              detail::fmt_short(c.dt));
    if (c.r_relax > c.t_end + 1e-12) throw ConfigError(line_of("objective.r_relax"), "r_relax exceeds t_end");

    const auto check_unit = [&](const FieldSpec& f, const char* full, const char* name) {
        if (f.kind == FieldSource::Constant && !(f.value >= 0.0 && f.value <= 1.0))
            throw ConfigError(line_of(full), std::string(name) + " = " + detail::fmt_short(f.value) +
                                                 " outside the admissible nutrient range [0, 1]");
    };
    check_unit(c.sigma0, "initial.sigma0", "sigma0");
    check_unit(c.sigmaS, "initial.sigmaS", "sigmaS");

    try {
        c.params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    if (!(c.stabilization > 0)) throw ConfigError(line_of("model.stabilization"), "stabilization must be positive");
    if (c.phi0.kind == FieldSource::TanhSeed && !(c.seed_radius > 0))
        throw ConfigError(line_of("initial.seed_radius"), "seed_radius must be positive");
    const struct {
        double v;
        const char* key;
    } betas[] = {{c.beta_Q, "objective.beta_Q"},
                 {c.beta_Omega, "objective.beta_Omega"},
                 {c.beta_S, "objective.beta_S"},
                 {c.beta_T, "objective.beta_T"}};
    for (const auto& b : betas)
        if (!(b.v >= 0)) throw ConfigError(line_of(b.key), std::string(b.key) + " must be nonnegative");
    if (!(c.beta_u > 0)) throw ConfigError(line_of("objective.beta_u"), "beta_u must be positive");
    if (!(c.control_value >= 0 && c.control_value <= 1))
        throw ConfigError(line_of("control.value"), "control value must lie in [0, 1]");
    if (!(c.control_amplitude >= 0)) throw ConfigError(line_of("control.amplitude"), "amplitude must be nonnegative");
    if (!(c.linear.cg_rel_tol > 0)) throw ConfigError(line_of("solver.cg_rel_tol"), "cg_rel_tol must be positive");
    if (!(c.linear.cg_iter_factor > 0))
        throw ConfigError(line_of("solver.cg_iter_factor"), "cg_iter_factor must be positive");
    if (c.verify_random_runs < 1) throw ConfigError(line_of("verify.random_runs"), "random_runs must be >= 1");
    if (c.verify_directions < 1) throw ConfigError(line_of("verify.directions"), "directions must be >= 1");
    try {
        c.optimizer.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    if (c.fixed_tau >= 0) {
        const double m = c.fixed_tau / c.dt;
        if (std::abs(m - std::round(m)) > 1e-9 * std::max(1.0, m) || c.fixed_tau > c.t_end + 1e-12)
            throw ConfigError(line_of("optimizer.tau"), "tau must be a time node in [0, t_end]");
        c.optimizer.fixed_tau_index = static_cast<int>(std::lround(m));
    }
    const bool manufactured = c.phi_Q.kind == FieldSource::Manufactured || c.phi_Omega.kind == FieldSource::Manufactured;
    if (manufactured && !(c.dagger_base - std::abs(c.dagger_amplitude) >= 0 && c.dagger_base + std::abs(c.dagger_amplitude) <= 1))
        throw ConfigError(line_of("manufactured.amplitude"), "manufactured dose must stay within [0, 1]");
    c.optimizer.seed = c.seed;
    return c;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.parent_path());
}

namespace detail {

inline ScalarField load_field_spec(const FieldSpec& f, const Grid& g, const RunConfig& c) {
    if (f.kind == FieldSource::File) {
        const std::filesystem::path p = std::filesystem::path(f.path).is_absolute() ? std::filesystem::path(f.path) : c.base_dir / f.path;
        ScalarField v = read_field(p);
        if (!(v.grid() == g)) throw ConfigError(0, "field file " + p.string() + " does not match the configured grid");
        return v;
    }
    return ScalarField(g, f.value);
}

}  // namespace detail

/// Reference dose of the manufactured-tracking problem.
inline Control manufactured_control(const RunConfig& c, const TimeGrid& tg, const Grid& g) {
    const double pi = std::acos(-1.0);
    const double base = c.dagger_base;
    const double amp = c.dagger_amplitude;
    const double T = tg.t_end();
    const double lx = g.lx();
    const double ly = g.ly();
    const bool two_d = g.dim() == 2;
    return Control::from_function(tg, g, [=](double x, double y, double t) {
        double s = std::sin(pi * t / T) * std::cos(pi * x / lx);
        if (two_d) s *= std::cos(pi * y / ly);
        return base + amp * s;
    });
}

inline ProblemData build_problem(const RunConfig& c) {
    const Grid g = c.grid();
    ProblemData d;
    if (c.phi0.kind == FieldSource::TanhSeed) {
        const double width = c.seed_width > 0 ? c.seed_width : std::sqrt(c.params.B / c.params.A);
        const double cx = 0.5 * g.lx();
        const double cy = 0.5 * g.ly();
        const bool two_d = g.dim() == 2;
        const double radius = c.seed_radius;
        d.phi0 = ScalarField::from_function(g, [=](double x, double y) {
            const double dist = two_d ? std::hypot(x - cx, y - cy) : std::abs(x - cx);
            return std::tanh((radius - dist) / (std::sqrt(2.0) * width));
        });
    } else {
        d.phi0 = detail::load_field_spec(c.phi0, g, c);
    }
    d.sigma0 = detail::load_field_spec(c.sigma0, g, c);
    d.sigmaS = detail::load_field_spec(c.sigmaS, g, c);
    d.params = c.params;
    d.scheme.stabilization = c.stabilization;
    d.scheme.linear = c.linear;
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
    return d;
}

inline ObjectiveSpec build_objective(const RunConfig& c, const ProblemData& data, const TimeGrid& tg) {
    ObjectiveSpec o;
    o.beta_Q = c.beta_Q;
    o.beta_Omega = c.beta_Omega;
    o.beta_S = c.beta_S;
    o.beta_u = c.beta_u;
    o.beta_T = c.beta_T;
    o.r_relax = c.r_relax;
    o.include_btau_term = c.include_btau_term;
    o.tau_tol = c.tau_tol;
    std::vector<ScalarField> manufactured;
    if (c.phi_Q.kind == FieldSource::Manufactured || c.phi_Omega.kind == FieldSource::Manufactured)
        manufactured = solve_state(data, manufactured_control(c, tg, data.grid()), tg).phi;
    const auto make = [&](const FieldSpec& f) {
        if (f.kind == FieldSource::Manufactured) return TargetField(manufactured);
        return TargetField(detail::load_field_spec(f, data.grid(), c));
    };
    o.phi_Q = make(c.phi_Q);
    o.phi_Omega = make(c.phi_Omega);
    o.validate(tg);
    return o;
}

/// Initial dose: constant, or a smooth random field clamped to [0, 1].
inline Control build_initial_control(const RunConfig& c, const TimeGrid& tg, const Grid& g) {
    if (c.control_init == "random")
        return project_admissible(smooth_random_control(tg, g, c.seed, c.control_value, c.control_amplitude));
    return Control(tg, g, c.control_value);
}

}  // namespace chemodose
