#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "math_util.hpp"
#include "params.hpp"
#include "version.hpp"

namespace cavfb {

// FNV-1a 64-bit digest of a file's bytes, as a fixed-width hex string.
inline std::string fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read file for digest: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    char hex[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        hex[i] = digits[h & 0xf];
        h >>= 4;
    }
    hex[16] = '\0';
    return std::string(hex, 16);
}

inline std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json json_from_params(const SystemParams& p) {
    return {
        {"chi_hz", p.chi / two_pi},
        {"gamma", p.gamma},
        {"gamma_up", p.gamma_up},
        {"t1_cavity", p.t1_cavity},
        {"t_m", p.t_m},
        {"t_g", p.t_g},
        {"theta_0", p.theta_0},
        {"p_e_given_g", p.p_e_given_g},
        {"p_g_given_e", p.p_g_given_e},
        {"c_ro", p.c_ro},
        {"feedback_phase", p.feedback_phase},
    };
}

inline SystemParams params_from_json(const nlohmann::json& j) {
    SystemParams p;
    p.chi = two_pi * j.at("chi_hz").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.gamma_up = j.at("gamma_up").get<double>();
    p.t1_cavity = j.at("t1_cavity").get<double>();
    p.t_m = j.at("t_m").get<double>();
    p.t_g = j.at("t_g").get<double>();
    p.theta_0 = j.at("theta_0").get<double>();
    p.p_e_given_g = j.at("p_e_given_g").get<double>();
    p.p_g_given_e = j.at("p_g_given_e").get<double>();
    p.c_ro = j.at("c_ro").get<double>();
    p.feedback_phase = j.at("feedback_phase").get<double>();
    return p;
}

// Everything needed to reproduce a run: resolved parameters, command settings,
// seed, and digests of what was written.
struct RunManifest {
    std::string tool_version = version_string;
    std::string command;
    std::string preset;
    SystemParams system;
    nlohmann::json settings;  // command-specific knobs, already resolved
    std::uint64_t seed = 0;
    std::uint64_t shots = 0;
    unsigned workers = 1;
    std::string started_at, finished_at;
    std::vector<std::pair<std::string, std::string>> outputs;  // (relative path, digest)
};

inline void save_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j = {
        {"tool_version", m.tool_version},
        {"command", m.command},
        {"preset", m.preset},
        {"system", json_from_params(m.system)},
        {"settings", m.settings},
        {"seed", m.seed},
        {"shots", m.shots},
        {"workers", m.workers},
        {"started_at", m.started_at},
        {"finished_at", m.finished_at},
    };
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& [file, digest] : m.outputs)
        outs.push_back({{"file", file}, {"fnv1a64", digest}});
    j["outputs"] = outs;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << j.dump(2) << "\n";
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open manifest: " + path);
    nlohmann::json j;
    is >> j;
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.preset = j.value("preset", "");
    m.system = params_from_json(j.at("system"));
    m.settings = j.value("settings", nlohmann::json::object());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.shots = j.value("shots", std::uint64_t{0});
    m.workers = j.value("workers", 1u);
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    if (j.contains("outputs"))
        for (const auto& o : j["outputs"])
            m.outputs.emplace_back(o.at("file").get<std::string>(),
                                   o.value("fnv1a64", ""));
    return m;
}

} // namespace cavfb
