#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "system.hpp"

namespace slowfast {

/* ------------------------------------------------------------ config text */

struct ConfigEntry {
    std::string key, value;
    int line = 0;
};

/* Parsed flat sectioned key=value configuration.  Values stay as the raw
   strings they were written with, so serialize() round-trips exactly. */
struct RunConfig {
    std::string command;
    std::vector<ConfigEntry> system, run, output;

    std::uint64_t seed = 0;
    std::string out_dir = "out";
    bool emit_svg = false;

    const ConfigEntry* find(const std::vector<ConfigEntry>& sec, const std::string& key) const {
        for (const auto& e : sec)
            if (e.key == key) return &e;
        return nullptr;
    }

    bool has(const std::vector<ConfigEntry>& sec, const std::string& key) const {
        return find(sec, key) != nullptr;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_real(const ConfigEntry& e) {
    const char* p = e.value.c_str();
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p || *end != '\0' || !std::isfinite(v))
        fail(ErrorCode::ParseError,
             "line " + std::to_string(e.line) + ": '" + e.value + "' is not a number");
    return v;
}

inline std::uint64_t parse_count(const ConfigEntry& e) {
    const double v = parse_real(e);
    if (v < 0.0) fail(ErrorCode::RangeError, "line " + std::to_string(e.line) + ": " + e.key +
                                                 " must be nonnegative");
    if (v > 9.2e18 || v != std::floor(v))
        fail(ErrorCode::RangeError,
             "line " + std::to_string(e.line) + ": " + e.key + " must be a 64-bit count");
    return static_cast<std::uint64_t>(v);
}

inline std::vector<double> parse_real_list(const ConfigEntry& e) {
    std::vector<double> out;
    std::stringstream ss(e.value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        const char* p = tok.c_str();
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (tok.empty() || end == p || *end != '\0' || !std::isfinite(v))
            fail(ErrorCode::ParseError,
                 "line " + std::to_string(e.line) + ": bad list element '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty())
        fail(ErrorCode::ParseError, "line " + std::to_string(e.line) + ": empty list for " + e.key);
    return out;
}

/* value type per known key; drives eager validation at load time */
enum class KeyKind { Count, Real, RealList, Str };

inline const std::map<std::string, KeyKind>& key_kinds() {
    static const std::map<std::string, KeyKind> kinds = {
        {"steps", KeyKind::Count},       {"bins", KeyKind::Count},
        {"replicas", KeyKind::Count},    {"n_beta", KeyKind::Count},
        {"n_alpha", KeyKind::Count},     {"n_y", KeyKind::Count},
        {"n_nodes", KeyKind::Count},     {"n_speeds", KeyKind::Count},
        {"transitions", KeyKind::Count}, {"cap_steps", KeyKind::Count},
        {"n_v", KeyKind::Count},         {"subsample", KeyKind::Count},
        {"m", KeyKind::Count},           {"seed", KeyKind::Count},
        {"n_cells", KeyKind::Count},     {"svg", KeyKind::Count},
        {"x0", KeyKind::Real},           {"y0", KeyKind::Real},
        {"hist_lo", KeyKind::Real},      {"hist_hi", KeyKind::Real},
        {"horizon", KeyKind::Real},      {"threshold", KeyKind::Real},
        {"v_lo", KeyKind::Real},         {"v_hi", KeyKind::Real},
        {"cap_slow", KeyKind::Real},     {"cap_r_hat", KeyKind::Real},
        {"rho", KeyKind::Real},          {"epsilon", KeyKind::Real},
        {"domain_lo", KeyKind::Real},    {"domain_hi", KeyKind::Real},
        {"bound", KeyKind::Real},        {"lipschitz", KeyKind::Real},
        {"sin_amp", KeyKind::Real},      {"b_max", KeyKind::Real},
        {"v0", KeyKind::Real},           {"delta", KeyKind::Real},
        {"alpha_band", KeyKind::Real},   {"marker_radius", KeyKind::Real},
        {"epsilons", KeyKind::RealList}, {"x_list", KeyKind::RealList},
        {"poly", KeyKind::RealList},     {"attractors", KeyKind::RealList},
        {"command", KeyKind::Str},       {"builtin", KeyKind::Str},
        {"family", KeyKind::Str},        {"driver", KeyKind::Str},
        {"method", KeyKind::Str},        {"dir", KeyKind::Str},
        {"design", KeyKind::Str},
    };
    return kinds;
}

struct CommandKeys {
    std::vector<std::string> required, optional;
};

inline const std::map<std::string, CommandKeys>& command_keys() {
    static const std::map<std::string, CommandKeys> table = {
        {"sim-histogram", {{"steps"}, {"bins", "x0", "y0", "hist_lo", "hist_hi"}}},
        {"averaging-check", {{"horizon", "replicas", "threshold"}, {"x0", "y0", "n_y"}}},
        {"exit-times",
         {{"epsilons", "replicas", "v_lo", "v_hi", "x0"}, {"y0", "cap_slow", "cap_r_hat"}}},
        {"rate-tables", {{"x_list"}, {"n_beta", "n_alpha", "n_y", "b_max"}}},
        {"quasipotential", {{}, {"method", "n_nodes", "n_speeds", "n_y"}}},
        {"predict-occupation", {{}, {"method", "n_nodes", "n_speeds", "n_y", "alpha_band"}}},
        {"boundary-chain",
         {{"delta", "transitions"},
          {"x0", "y0", "cap_steps", "n_y", "method", "n_nodes", "n_speeds", "attractors"}}},
        {"resonance",
         {{"rho", "epsilon", "steps"},
          {"design", "v_lo", "v_hi", "n_v", "subsample", "v0", "x0", "y0", "n_y", "n_cells",
           "marker_radius"}}},
    };
    return table;
}

inline void check_known(const ConfigEntry& e) {
    if (key_kinds().find(e.key) == key_kinds().end())
        fail(ErrorCode::UnknownKey, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    switch (key_kinds().at(e.key)) {
        case KeyKind::Count: parse_count(e); break;
        case KeyKind::Real: parse_real(e); break;
        case KeyKind::RealList: parse_real_list(e); break;
        case KeyKind::Str: break;
    }
}

} // namespace detail

/* ----------------------------------------------------------------- loader */

inline RunConfig load_config_text(const std::string& text) {
    RunConfig cfg;
    std::vector<ConfigEntry>* section = nullptr;
    std::string section_name;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unterminated section header");
            section_name = detail::trim(line.substr(1, line.size() - 2));
            if (section_name == "system")
                section = &cfg.system;
            else if (section_name == "run")
                section = &cfg.run;
            else if (section_name == "output")
                section = &cfg.output;
            else
                fail(ErrorCode::ParseError,
                     "line " + std::to_string(line_no) + ": unknown section [" + section_name + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ", column " +
                                            std::to_string(line.size()) + ": expected key=value");
        if (section == nullptr)
            fail(ErrorCode::ParseError,
                 "line " + std::to_string(line_no) + ": key before any [section] header");
        ConfigEntry e;
        e.key = detail::trim(line.substr(0, eq));
        e.value = detail::trim(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty())
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ", column 1: empty key");
        for (const auto& prev : *section)
            if (prev.key == e.key)
                fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": duplicate key '" +
                                                e.key + "' (first at line " +
                                                std::to_string(prev.line) + ")");
        section->push_back(e);
    }

    /* ---- schema validation ---- */
    const ConfigEntry* cmd = cfg.find(cfg.run, "command");
    if (!cmd) fail(ErrorCode::MissingKey, "[run] command is required");
    cfg.command = cmd->value;
    const auto& table = detail::command_keys();
    const auto it = table.find(cfg.command);
    if (it == table.end()) fail(ErrorCode::UnknownName, "unknown command '" + cfg.command + "'");
    for (const auto& e : cfg.run) {
        if (e.key == "command" || e.key == "seed") continue;
        bool ok = false;
        for (const auto& k : it->second.required) ok = ok || k == e.key;
        for (const auto& k : it->second.optional) ok = ok || k == e.key;
        if (!ok)
            fail(ErrorCode::UnknownKey, "line " + std::to_string(e.line) + ": key '" + e.key +
                                            "' does not belong to command " + cfg.command);
        detail::check_known(e);
    }
    for (const auto& k : it->second.required)
        if (!cfg.has(cfg.run, k))
            fail(ErrorCode::MissingKey, "command " + cfg.command + " requires [run] " + k);
    if (cfg.command == "exit-times" && !cfg.has(cfg.run, "cap_slow") && !cfg.has(cfg.run, "cap_r_hat"))
        fail(ErrorCode::MissingKey, "exit-times requires cap_slow or cap_r_hat");

    if (!cfg.system.empty()) {
        if (cfg.has(cfg.system, "builtin")) {
            for (const auto& e : cfg.system)
                if (e.key != "builtin")
                    fail(ErrorCode::UnknownKey, "line " + std::to_string(e.line) +
                                                    ": builtin systems take no extra keys");
        } else {
            static const std::vector<std::string> allowed = {
                "family", "poly",      "sin_amp",   "driver", "m",
                "epsilon", "domain_lo", "domain_hi", "bound",  "lipschitz"};
            for (const auto& e : cfg.system) {
                bool ok = false;
                for (const auto& k : allowed) ok = ok || k == e.key;
                if (!ok)
                    fail(ErrorCode::UnknownKey,
                         "line " + std::to_string(e.line) + ": unknown [system] key '" + e.key + "'");
                detail::check_known(e);
            }
            for (const char* k : {"family", "poly", "driver", "epsilon", "domain_lo", "domain_hi"})
                if (!cfg.has(cfg.system, k))
                    fail(ErrorCode::MissingKey, std::string("inline [system] requires ") + k);
            if (cfg.find(cfg.system, "family")->value != "polysin")
                fail(ErrorCode::UnknownName, "unknown system family '" +
                                                 cfg.find(cfg.system, "family")->value + "'");
            const std::string drv = cfg.find(cfg.system, "driver")->value;
            if (drv != "expanding" && drv != "additive-uniform")
                fail(ErrorCode::UnknownName, "unknown driver '" + drv + "'");
            if (drv == "expanding" && !cfg.has(cfg.system, "m"))
                fail(ErrorCode::MissingKey, "expanding driver requires m");
        }
    } else if (cfg.command != "resonance") {
        fail(ErrorCode::MissingKey, "[system] section is required for command " + cfg.command);
    }

    for (const auto& e : cfg.output) {
        if (e.key != "dir" && e.key != "svg")
            fail(ErrorCode::UnknownKey,
                 "line " + std::to_string(e.line) + ": unknown [output] key '" + e.key + "'");
        detail::check_known(e);
    }
    if (const ConfigEntry* e = cfg.find(cfg.run, "seed")) cfg.seed = detail::parse_count(*e);
    if (const ConfigEntry* e = cfg.find(cfg.output, "dir")) cfg.out_dir = e->value;
    if (const ConfigEntry* e = cfg.find(cfg.output, "svg")) cfg.emit_svg = detail::parse_count(*e) != 0;
    return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str());
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream s;
    auto emit = [&s](const char* name, const std::vector<ConfigEntry>& sec) {
        if (sec.empty()) return;
        s << '[' << name << "]\n";
        for (const auto& e : sec) s << e.key << '=' << e.value << '\n';
        s << '\n';
    };
    emit("system", cfg.system);
    emit("run", cfg.run);
    emit("output", cfg.output);
    return s.str();
}

/* ------------------------------------------------------- typed extraction */

inline double cfg_real(const RunConfig& cfg, const std::vector<ConfigEntry>& sec,
                       const std::string& key, double fallback) {
    const ConfigEntry* e = cfg.find(sec, key);
    return e ? detail::parse_real(*e) : fallback;
}

inline std::uint64_t cfg_count(const RunConfig& cfg, const std::vector<ConfigEntry>& sec,
                               const std::string& key, std::uint64_t fallback) {
    const ConfigEntry* e = cfg.find(sec, key);
    return e ? detail::parse_count(*e) : fallback;
}

inline std::vector<double> cfg_list(const RunConfig& cfg, const std::vector<ConfigEntry>& sec,
                                    const std::string& key) {
    const ConfigEntry* e = cfg.find(sec, key);
    if (!e) fail(ErrorCode::MissingKey, "missing required list " + key);
    return detail::parse_real_list(*e);
}

inline std::string cfg_str(const RunConfig& cfg, const std::vector<ConfigEntry>& sec,
                           const std::string& key, const std::string& fallback) {
    const ConfigEntry* e = cfg.find(sec, key);
    return e ? e->value : fallback;
}

/* ----------------------------------------------------- system realization */

/* [system] section to a validated SystemSpec: either a named builtin or the
   polysin family B(x,y) = poly(x) + sin_amp*sin(2*pi*y) with an expanding
   or uniform-noise driver coupled through c(x) = x */
inline SystemSpec make_system_from_config(const RunConfig& cfg) {
    if (cfg.system.empty()) fail(ErrorCode::MissingKey, "[system] section absent");
    if (const ConfigEntry* b = cfg.find(cfg.system, "builtin"))
        return make_builtin(b->value).system();
    std::vector<double> poly = cfg_list(cfg, cfg.system, "poly");
    const double sin_amp = cfg_real(cfg, cfg.system, "sin_amp", 0.0);
    const double lo = cfg_real(cfg, cfg.system, "domain_lo", -1.0);
    const double hi = cfg_real(cfg, cfg.system, "domain_hi", 1.0);
    if (!(lo < hi)) fail(ErrorCode::BadDomain, "domain_lo must be below domain_hi");
    SystemSpec s;
    s.name = "polysin";
    s.drift.dim = 1;
    s.drift.rule = [poly, sin_amp](const SlowVec& x, double y) {
        double acc = 0.0;
        const double xx = x.scalar();
        for (std::size_t k = poly.size(); k-- > 0;) acc = acc * xx + poly[k];
        return SlowVec(acc + sin_amp * std::sin(kTwoPi * y));
    };
    double poly_peak = 0.0, slope_peak = 0.0;
    for (int k = 0; k <= 256; ++k) {
        const double xx = lo + (hi - lo) * k / 256.0;
        double acc = 0.0, dacc = 0.0;
        for (std::size_t j = poly.size(); j-- > 0;) {
            dacc = dacc * xx + acc;  // simultaneous Horner: dacc tracks the derivative
            acc = acc * xx + poly[j];
        }
        poly_peak = std::max(poly_peak, std::fabs(acc));
        slope_peak = std::max(slope_peak, std::fabs(dacc));
    }
    s.drift.bound = cfg_real(cfg, cfg.system, "bound", poly_peak + std::fabs(sin_amp) + 1.0);
    s.drift.lipschitz =
        cfg_real(cfg, cfg.system, "lipschitz", slope_peak + kTwoPi * std::fabs(sin_amp) + 1.0);
    const std::string drv = cfg.find(cfg.system, "driver")->value;
    if (drv == "expanding") {
        const int m = static_cast<int>(cfg_count(cfg, cfg.system, "m", 3));
        s.driver = make_expanding_driver(m, [](const SlowVec& x) { return x.scalar(); });
    } else {
        s.driver = make_additive_driver({1.0}, [](const SlowVec& x) { return x.scalar(); });
    }
    s.epsilon = cfg_real(cfg, cfg.system, "epsilon", 1e-3);
    s.slow_domain.box = {{lo, hi}};
    validate_system(s);
    return s;
}

} // namespace slowfast
