#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "math_util.hpp"
#include "params.hpp"

namespace cavfb {

// Plain key = value configuration with optional [section] blocks and '#'
// comments. Keys mirror the SystemParams field names; chi is given as chi/2pi
// in Hz at this boundary and converted to an angular frequency internally.
class Config {
public:
    static Config parse(std::istream& is) {
        Config cfg;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                ": unterminated section header");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": empty key");
            cfg.data_[section][key] = value;
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::invalid_argument("cannot open config file: " + path);
        return parse(is);
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto s = data_.find(section);
        if (s == data_.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    }

    bool has(const std::string& section, const std::string& key) const {
        return raw(section, key).has_value();
    }

    double number(const std::string& section, const std::string& key, double fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const double x = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
            return x;
        } catch (...) {
            throw std::invalid_argument("config " + dotted(section, key) +
                                        ": not a number: '" + *v + "'");
        }
    }

    long long integer(const std::string& section, const std::string& key, long long fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("");
            return x;
        } catch (...) {
            throw std::invalid_argument("config " + dotted(section, key) +
                                        ": not an integer: '" + *v + "'");
        }
    }

    std::string text(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
        return raw(section, key).value_or(fallback);
    }

    bool flag(const std::string& section, const std::string& key, bool fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
        if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
        throw std::invalid_argument("config " + dotted(section, key) +
                                    ": not a boolean: '" + *v + "'");
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
    static std::string dotted(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }
    std::map<std::string, std::map<std::string, std::string>> data_;
};

inline SystemParams params_from_preset(const std::string& name) {
    if (name == "idle") return preset_idle();
    if (name == "repeated") return preset_repeated();
    throw std::invalid_argument("unknown preset: " + name + " (expected idle or repeated)");
}

// Root-section overrides on top of a preset. Returns the params before
// validation; feedback_auto reports whether feedback_phase was "auto".
inline SystemParams apply_system_overrides(SystemParams base, const Config& cfg,
                                           bool& feedback_auto) {
    if (cfg.has("", "chi")) base.chi = two_pi * cfg.number("", "chi", 0.0);
    if (cfg.has("", "gamma") && cfg.has("", "t1_ancilla"))
        throw std::invalid_argument("config: give gamma or t1_ancilla, not both");
    if (cfg.has("", "gamma")) base.gamma = cfg.number("", "gamma", 0.0);
    if (cfg.has("", "t1_ancilla")) {
        const double t1 = cfg.number("", "t1_ancilla", 0.0);
        if (!(t1 > 0.0)) throw std::invalid_argument("t1_ancilla: non-positive time");
        base.gamma = 1.0 / t1;
    }
    base.gamma_up = cfg.number("", "gamma_up", base.gamma_up);
    base.t1_cavity = cfg.number("", "t1_cavity", base.t1_cavity);
    base.t_m = cfg.number("", "t_m", base.t_m);
    base.t_g = cfg.number("", "t_g", base.t_g);
    base.theta_0 = cfg.number("", "theta_0", base.theta_0);
    base.p_e_given_g = cfg.number("", "p_e_given_g", base.p_e_given_g);
    base.p_g_given_e = cfg.number("", "p_g_given_e", base.p_g_given_e);
    base.c_ro = cfg.number("", "c_ro", base.c_ro);

    feedback_auto = false;
    if (const auto fp = cfg.raw("", "feedback_phase")) {
        if (*fp == "auto") feedback_auto = true;
        else base.feedback_phase = cfg.number("", "feedback_phase", 0.0);
    }
    return base;
}

} // namespace cavfb
