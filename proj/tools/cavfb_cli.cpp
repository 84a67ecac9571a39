// Command-line front end for the cavity-dephasing simulator and analytics
// library. Subcommands:
//
//   decay          simulate coherence decay (idle / feedback / postselected)
//   sweep-tm       conditioned single-excitation coherence vs readout interval
//   sweep-heating  dephasing rates vs excitation rate, closed form
//   budget         per-event error budget and dephasing-time maps
//   hmm            hidden-state inference demo on simulated readout records
//   check          fast closed-form self-consistency checks
//
// Exit codes: 0 success, 2 configuration error, 3 numerical error,
// 4 self-check comparison failure.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cavfb/cavfb.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cavfb;

namespace {

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

struct GlobalArgs {
    std::string config_path;
    std::string preset;  // forces the preset for every mode when non-empty
    std::uint64_t seed = 1;
    long long shots = -1;  // -1: per-command default
    unsigned workers = 1;
    std::string out_dir = "out";
    std::string from_manifest;
};

// Collects files written under one output directory and digests them for the
// run manifest.
struct Outputs {
    fs::path dir;
    std::vector<std::string> names;

    explicit Outputs(const std::string& d) : dir(d) { fs::create_directories(dir); }

    std::string path(const std::string& name) {
        names.push_back(name);
        return (dir / name).string();
    }

    std::vector<std::pair<std::string, std::string>> digests() const {
        std::vector<std::pair<std::string, std::string>> out;
        out.reserve(names.size());
        for (const auto& n : names) out.emplace_back(n, fnv1a64_file((dir / n).string()));
        return out;
    }
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_run_manifest(Outputs& outs, const std::string& command, const std::string& preset,
                        const SystemParams& system, json settings, std::uint64_t seed,
                        std::uint64_t shots, unsigned workers, const std::string& started) {
    RunManifest m;
    m.command = command;
    m.preset = preset;
    m.system = system;
    m.settings = std::move(settings);
    m.seed = seed;
    m.shots = shots;
    m.workers = workers;
    m.started_at = started;
    m.finished_at = iso_utc_now();
    m.outputs = outs.digests();
    save_manifest((outs.dir / "manifest.json").string(), m);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

struct ResolvedSystem {
    ValidatedParams params;
    std::string preset;
    bool feedback_auto = false;
};

std::set<std::string> g_printed_warnings;

// preset -> config-file overrides -> validation; feedback_phase = auto picks
// the exact budget optimum for the resolved parameters. Commands whose output
// depends on the correction phase pass auto_when_unset so that an unconfigured
// phase also lands on the optimum; an explicit numeric value always wins.
ResolvedSystem resolve_system(const std::string& default_preset, const GlobalArgs& g,
                              const Config& cfg, bool auto_when_unset = false) {
    const std::string preset =
        !g.preset.empty() ? g.preset : cfg.text("", "preset", default_preset);
    bool fb_auto = false;
    SystemParams base = apply_system_overrides(params_from_preset(preset), cfg, fb_auto);
    ValidatedParams vp = validate(base);
    if (auto_when_unset && !cfg.has("", "feedback_phase")) fb_auto = true;
    if (fb_auto) vp.feedback_phase = refine_optimal_phase(vp);
    for (const auto& w : vp.warnings)
        if (g_printed_warnings.insert(w).second) std::cerr << "warning: " << w << "\n";
    return {vp, preset, fb_auto};
}

std::uint64_t point_seed(std::uint64_t master, int stream, std::size_t j) {
    return Rng::derive_stream_seed(master, std::uint64_t(stream) * 1000003ull + j);
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out;
    out.reserve(std::size_t(std::max(n, 1)));
    if (n <= 1) {
        out.push_back(lo);
        return out;
    }
    for (int k = 0; k < n; ++k) out.push_back(lo + (hi - lo) * k / (n - 1));
    return out;
}

std::vector<double> logspace(double lo, double hi, int n) {
    if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("log grid needs 0 < min < max");
    std::vector<double> out;
    out.reserve(std::size_t(std::max(n, 1)));
    if (n <= 1) {
        out.push_back(lo);
        return out;
    }
    const double la = std::log(lo), lb = std::log(hi);
    for (int k = 0; k < n; ++k) out.push_back(std::exp(la + (lb - la) * k / (n - 1)));
    return out;
}

json fit_to_json(const DecayFit& f) {
    return {{"t2", finite_or_null(f.t2)},
            {"t2_err", finite_or_null(f.t2_err)},
            {"amplitude", f.amplitude},
            {"tphi", finite_or_null(f.tphi)},
            {"tphi_lo", finite_or_null(f.tphi_lo)},
            {"tphi_hi", finite_or_null(f.tphi_hi)},
            {"photon_loss_limited", f.photon_loss_limited},
            {"chi2", f.chi2},
            {"ndof", f.ndof}};
}

// ---------------------------------------------------------------------------
// decay
// ---------------------------------------------------------------------------

struct DecayMode {
    std::string name;  // idle | feedback | postselected
    std::string preset;
    SystemParams system;  // resolved, feedback_phase already final
    double horizon = 0.0;
};

struct DecayPlan {
    std::vector<DecayMode> modes;
    int points = 10;
    int survival_points = 12;
    bool dump_shots = false;
};

json decay_settings_json(const DecayPlan& plan) {
    json modes = json::array();
    for (const auto& m : plan.modes)
        modes.push_back({{"name", m.name},
                         {"preset", m.preset},
                         {"horizon", m.horizon},
                         {"system", json_from_params(m.system)}});
    return {{"modes", modes},
            {"points", plan.points},
            {"survival_points", plan.survival_points},
            {"dump_shots", plan.dump_shots}};
}

DecayPlan decay_plan_from_json(const json& settings) {
    DecayPlan plan;
    for (const auto& m : settings.at("modes"))
        plan.modes.push_back({m.at("name").get<std::string>(), m.at("preset").get<std::string>(),
                              params_from_json(m.at("system")), m.at("horizon").get<double>()});
    plan.points = settings.at("points").get<int>();
    plan.survival_points = settings.at("survival_points").get<int>();
    plan.dump_shots = settings.at("dump_shots").get<bool>();
    return plan;
}

// Measurement-driven modes snap times to whole readout cycles.
std::vector<double> decay_grid(const DecayMode& m, int points) {
    std::vector<double> out;
    if (m.name == "idle") {
        for (int j = 1; j <= points; ++j) out.push_back(m.horizon * j / points);
        return out;
    }
    std::set<long long> cycles;
    for (int j = 1; j <= points; ++j) {
        const double t = m.horizon * j / points;
        const long long n = std::max<long long>(1, std::llround(t / m.system.t_m));
        if (cycles.insert(n).second) out.push_back(double(n) * m.system.t_m);
    }
    return out;
}

int cmd_decay(const DecayPlan& plan, const GlobalArgs& g, std::uint64_t shots) {
    const std::string started = iso_utc_now();
    Outputs outs(g.out_dir);
    json report;
    report["command"] = "decay";
    report["shots"] = shots;

    // postselection reuses the feedback records, so simulate those once
    const DecayMode* fb_like = nullptr;
    for (const auto& m : plan.modes)
        if (m.name == "feedback") fb_like = &m;
    if (!fb_like)
        for (const auto& m : plan.modes)
            if (m.name == "postselected") fb_like = &m;

    std::vector<double> fb_grid;
    std::vector<std::vector<ShotRecord>> fb_records;
    ValidatedParams fb_params;
    if (fb_like) {
        fb_params = validate(fb_like->system);
        fb_grid = decay_grid(*fb_like, plan.points);
        fb_records.reserve(fb_grid.size());
        for (std::size_t j = 0; j < fb_grid.size(); ++j) {
            ProtocolConfig pc;
            pc.duration = fb_grid[j];
            fb_records.push_back(
                run_ensemble(pc, fb_params, shots, point_seed(g.seed, 2, j), g.workers));
        }
    }

    std::vector<PlotSeries> decay_series;
    for (const auto& m : plan.modes) {
        const ValidatedParams vp = validate(m.system);
        CoherenceSeries series;
        std::vector<std::vector<ShotRecord>> own_records;  // idle only

        if (m.name == "idle") {
            const auto grid = decay_grid(m, plan.points);
            for (std::size_t j = 0; j < grid.size(); ++j) {
                ProtocolConfig pc;
                pc.duration = grid[j];
                pc.measurements_enabled = false;
                auto recs = run_ensemble(pc, vp, shots, point_seed(g.seed, 1, j), g.workers);
                series.emplace_back(grid[j], coherence_of(recs, vp));
                if (plan.dump_shots) own_records.push_back(std::move(recs));
            }
        } else if (m.name == "feedback") {
            for (std::size_t j = 0; j < fb_grid.size(); ++j)
                series.emplace_back(fb_grid[j], coherence_of(fb_records[j], fb_params));
        } else {  // postselected: keep only detection-free shots
            for (std::size_t j = 0; j < fb_grid.size(); ++j) {
                try {
                    series.emplace_back(fb_grid[j],
                                        coherence_of(postselect(fb_records[j], 0), fb_params));
                } catch (const std::invalid_argument&) {
                    std::cerr << "warning: no detection-free shots at t = "
                              << format_number(fb_grid[j]) << ", point skipped\n";
                }
            }
        }

        CsvWriter csv(outs.path("decay_" + m.name + ".csv"), {"t", "abs", "err", "n"});
        PlotSeries ps;
        ps.label = m.name;
        for (const auto& [t, pt] : series) {
            csv.row({t, std::abs(pt.value), pt.abs_err, double(pt.n_samples)});
            ps.x.push_back(t);
            ps.y.push_back(std::abs(pt.value));
        }
        csv.close();
        decay_series.push_back(std::move(ps));

        json mj;
        mj["preset"] = m.preset;
        mj["feedback_phase"] = m.system.feedback_phase;
        mj["horizon"] = m.horizon;
        mj["n_points"] = series.size();
        if (m.name == "idle") {
            const double rate = dephasing_idle(vp);
            mj["analytic"] = {{"dephasing_rate", rate}, {"tphi", 1.0 / rate}};
        } else {
            const BudgetReport budget = event_budget(vp, vp.feedback_phase);
            if (m.name == "feedback")
                mj["analytic"] = {{"dephasing_rate", budget.total_rate},
                                  {"tphi", finite_or_null(budget.total_tphi)}};
            else
                mj["analytic"] = {{"dephasing_rate", budget.postselected_rate},
                                  {"tphi", finite_or_null(budget.postselected_tphi)}};
        }
        try {
            mj["fit"] = fit_to_json(fit_decay(series, vp));
        } catch (const std::exception& e) {
            mj["fit_error"] = e.what();
        }
        report["modes"][m.name] = mj;

        if (plan.dump_shots && m.name != "postselected") {
            CsvWriter dump(outs.path("shots_" + m.name + ".csv"),
                           {"t", "shot", "theta_net", "k_detected", "first_detection_cycle"});
            const auto& sets = m.name == "idle" ? own_records : fb_records;
            const auto& grid_ref = m.name == "idle" ? decay_grid(m, plan.points) : fb_grid;
            for (std::size_t j = 0; j < sets.size(); ++j)
                for (std::size_t i = 0; i < sets[j].size(); ++i)
                    dump.row({grid_ref[j], double(i), sets[j][i].theta_net,
                              double(sets[j][i].k_detected),
                              double(sets[j][i].first_detection_cycle)});
            dump.close();
        }
    }

    // survival of the detection-free population, from the longest feedback run
    if (fb_like && !fb_records.empty()) {
        const double horizon = fb_grid.back();
        std::vector<double> sgrid;
        for (int k = 1; k <= plan.survival_points; ++k)
            sgrid.push_back(horizon * k / plan.survival_points);
        const SurvivalFit sfit = fit_survival_rate(fb_records.back(), sgrid, fb_params);
        CsvWriter csv(outs.path("survival.csv"), {"t", "fraction"});
        PlotSeries ps;
        ps.label = "no detection";
        for (const auto& [t, frac] : sfit.fractions) {
            csv.row({t, frac});
            ps.x.push_back(t);
            ps.y.push_back(frac);
        }
        csv.close();
        const double analytic =
            fb_params.gamma_up + fb_params.p_e_given_g / fb_params.t_m;
        report["survival"] = {{"rate", sfit.rate},
                              {"rate_err", sfit.rate_err},
                              {"analytic_erasure_rate", analytic}};
        write_line_svg(outs.path("survival.svg"), "detection-free survival", "time (s)",
                       "fraction", {ps}, true);
    }

    write_line_svg(outs.path("decay.svg"), "coherence decay", "time (s)", "|C|",
                   decay_series, true);

    std::ofstream rep(outs.path("report.json"), std::ios::binary);
    rep << report.dump(2) << "\n";
    rep.close();

    const DecayMode& head = fb_like ? *fb_like : plan.modes.front();
    write_run_manifest(outs, "decay", head.preset, head.system, decay_settings_json(plan),
                       g.seed, shots, g.workers, started);
    std::cout << "decay: wrote " << outs.names.size() << " files to " << g.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep-tm
// ---------------------------------------------------------------------------

struct SweepTmPlan {
    std::string preset;
    SystemParams system;  // t_m replaced per point; t_g clamped below t_m
    std::vector<double> tm_grid;
    int fringe_points = 12;
    long long fringe_shots = 4000;
};

json sweep_tm_settings_json(const SweepTmPlan& plan) {
    return {{"preset", plan.preset},
            {"system", json_from_params(plan.system)},
            {"tm_grid", plan.tm_grid},
            {"fringe_points", plan.fringe_points},
            {"fringe_shots", plan.fringe_shots}};
}

SweepTmPlan sweep_tm_plan_from_json(const json& settings) {
    SweepTmPlan plan;
    plan.preset = settings.at("preset").get<std::string>();
    plan.system = params_from_json(settings.at("system"));
    plan.tm_grid = settings.at("tm_grid").get<std::vector<double>>();
    plan.fringe_points = settings.at("fringe_points").get<int>();
    plan.fringe_shots = settings.at("fringe_shots").get<long long>();
    return plan;
}

int cmd_sweep_tm(const SweepTmPlan& plan, const GlobalArgs& g, std::uint64_t samples) {
    const std::string started = iso_utc_now();
    Outputs outs(g.out_dir);

    CsvWriter csv(outs.path("sweep_tm.csv"),
                  {"t_m", "sim_mag", "sim_mag_err", "analytic_mag", "ideal_mag", "fringe_mag",
                   "fringe_phase", "analytic_phase", "survive_fraction", "survive_analytic"});
    PlotSeries sim{"conditioned MC", {}, {}}, ana{"closed form", {}, {}},
        ideal{"ideal sinc", {}, {}};
    double max_pull = 0.0;

    for (std::size_t j = 0; j < plan.tm_grid.size(); ++j) {
        SystemParams q = plan.system;
        q.t_m = plan.tm_grid[j];
        q.t_g = std::min(q.t_g, 0.4 * q.t_m);  // keep the reset inside the window
        const ValidatedParams vp = validate(q);

        const ConditionedEstimate est =
            estimate_event1(vp, samples, point_seed(g.seed, 3, j), g.workers);
        const cplx c_full = est.c1 * std::polar(1.0, vp.theta_0);
        const cplx c_analytic = event1_coherence(vp, 0.0).coherence;
        const MagnitudePhase id =
            single_excitation_coherence(vp.chi, vp.t_m, vp.theta_0);
        const IntervalProbs ip = interval_probabilities(vp);
        const double survive_analytic = ip.p1 / (ip.p1 + ip.p2);

        // re-analyze through the interference-fringe pipeline, with optional
        // shot noise on each probability sample
        Rng fringe_rng = Rng::stream(g.seed, 50000 + j);
        std::vector<std::pair<double, double>> fringe;
        for (int k = 0; k < plan.fringe_points; ++k) {
            const double th = two_pi * k / plan.fringe_points;
            double prob = ramsey_probability(c_full, th);
            if (plan.fringe_shots > 0) {
                long long hits = 0;
                for (long long s = 0; s < plan.fringe_shots; ++s)
                    hits += fringe_rng.bernoulli(prob);
                prob = double(hits) / double(plan.fringe_shots);
            }
            fringe.emplace_back(th, prob);
        }
        const FringeFit ff = fit_fringe(fringe);

        csv.row({vp.t_m, std::abs(est.c1), est.c1_err, std::abs(c_analytic), id.magnitude,
                 ff.magnitude, ff.phase, wrap_angle(std::arg(c_analytic)),
                 est.survive_fraction, survive_analytic});
        sim.x.push_back(vp.t_m);
        sim.y.push_back(std::abs(est.c1));
        ana.x.push_back(vp.t_m);
        ana.y.push_back(std::abs(c_analytic));
        ideal.x.push_back(vp.t_m);
        ideal.y.push_back(id.magnitude);
        if (est.c1_err > 0.0)
            max_pull = std::max(
                max_pull, std::abs(std::abs(est.c1) - std::abs(c_analytic)) / est.c1_err);
    }
    csv.close();

    write_line_svg(outs.path("sweep_tm.svg"), "surviving-excitation coherence vs t_m",
                   "t_m (s)", "|C1|", {sim, ana, ideal});

    json report = {{"command", "sweep-tm"},
                   {"samples", samples},
                   {"n_points", plan.tm_grid.size()},
                   {"max_magnitude_pull_sigma", max_pull}};
    std::ofstream rep(outs.path("report.json"), std::ios::binary);
    rep << report.dump(2) << "\n";
    rep.close();

    write_run_manifest(outs, "sweep-tm", plan.preset, plan.system,
                       sweep_tm_settings_json(plan), g.seed, samples, g.workers, started);
    std::cout << "sweep-tm: wrote " << outs.names.size() << " files to " << g.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep-heating
// ---------------------------------------------------------------------------

struct SweepHeatingPlan {
    std::string preset;
    SystemParams system;  // gamma_up replaced per point
    std::vector<double> gu_grid;
    bool auto_phase = true;  // re-optimize the correction phase per point
    int sim_points = 6;      // decay points per simulated rate (sim_shots > 0)
};

json sweep_heating_settings_json(const SweepHeatingPlan& plan) {
    return {{"preset", plan.preset},
            {"system", json_from_params(plan.system)},
            {"gu_grid", plan.gu_grid},
            {"auto_phase", plan.auto_phase},
            {"sim_points", plan.sim_points}};
}

SweepHeatingPlan sweep_heating_plan_from_json(const json& settings) {
    SweepHeatingPlan plan;
    plan.preset = settings.at("preset").get<std::string>();
    plan.system = params_from_json(settings.at("system"));
    plan.gu_grid = settings.at("gu_grid").get<std::vector<double>>();
    plan.auto_phase = settings.at("auto_phase").get<bool>();
    plan.sim_points = settings.at("sim_points").get<int>();
    return plan;
}

int cmd_sweep_heating(const SweepHeatingPlan& plan, const GlobalArgs& g,
                      std::uint64_t sim_shots) {
    const std::string started = iso_utc_now();
    Outputs outs(g.out_dir);

    std::vector<std::string> cols = {"gamma_up",       "theta_tilde", "rate_idle",
                                     "rate_feedback",  "tphi_idle",   "tphi_feedback"};
    if (sim_shots > 0) {
        cols.push_back("rate_feedback_sim");
        cols.push_back("rate_feedback_sim_err");
    }
    CsvWriter csv(outs.path("sweep_heating.csv"), cols);

    std::vector<double> x, y_idle, y_fb, w;
    PlotSeries ps_idle{"idle", {}, {}}, ps_fb{"feedback", {}, {}};
    for (std::size_t j = 0; j < plan.gu_grid.size(); ++j) {
        SystemParams q = plan.system;
        q.gamma_up = plan.gu_grid[j];
        const ValidatedParams vp = validate(q);
        const double theta =
            plan.auto_phase ? refine_optimal_phase(vp) : vp.feedback_phase;
        const double rate_idle = dephasing_idle(vp);
        const BudgetReport budget = event_budget(vp, theta);

        x.push_back(vp.gamma_up);
        y_idle.push_back(rate_idle);
        y_fb.push_back(budget.total_rate);
        w.push_back(1.0);
        ps_idle.x.push_back(vp.gamma_up);
        ps_idle.y.push_back(rate_idle);
        ps_fb.x.push_back(vp.gamma_up);
        ps_fb.y.push_back(budget.total_rate);

        std::vector<double> row = {vp.gamma_up,        theta,
                                   rate_idle,          budget.total_rate,
                                   1.0 / rate_idle,    budget.total_tphi};
        if (sim_shots > 0) {
            // quick simulated cross-check of the feedback rate at this point
            ValidatedParams sp = vp;
            sp.feedback_phase = theta;
            const double horizon = std::clamp(1.5 / budget.total_rate, 2e-3, 4e-2);
            CoherenceSeries series;
            for (int k = 1; k <= plan.sim_points; ++k) {
                const long long n =
                    std::max<long long>(1, std::llround(horizon * k / plan.sim_points / sp.t_m));
                ProtocolConfig pc;
                pc.duration = double(n) * sp.t_m;
                const auto recs = run_ensemble(pc, sp, sim_shots,
                                               point_seed(g.seed, 4, j * 100 + k), g.workers);
                series.emplace_back(pc.duration, coherence_of(recs, sp));
            }
            const DecayFit fit = fit_decay(series, sp);
            const double sim_rate = 1.0 / fit.t2 - 1.0 / (2.0 * sp.t1_cavity);
            const double sim_err = fit.t2_err / (fit.t2 * fit.t2);
            row.push_back(sim_rate);
            row.push_back(sim_err);
        }
        std::vector<std::string> cells;
        cells.reserve(row.size());
        for (double v : row) cells.push_back(format_number(v));
        csv.row_text(cells);
    }
    csv.close();

    const LinearFit slope_idle = weighted_linear_fit(x, y_idle, w);
    const LinearFit slope_fb = weighted_linear_fit(x, y_fb, w);
    const ValidatedParams base = validate(plan.system);
    json report = {
        {"command", "sweep-heating"},
        {"slope_idle", slope_idle.slope},
        {"slope_feedback", slope_fb.slope},
        {"slope_ratio", slope_idle.slope / slope_fb.slope},
        {"intercept_feedback", slope_fb.intercept},
        {"improvement_ideal_at_base",
         dephasing_idle(base) / dephasing_feedback_ideal(base)},
    };
    std::ofstream rep(outs.path("report.json"), std::ios::binary);
    rep << report.dump(2) << "\n";
    rep.close();

    write_line_svg(outs.path("sweep_heating.svg"), "dephasing rate vs excitation rate",
                   "gamma_up (1/s)", "rate (1/s)", {ps_idle, ps_fb});
    write_run_manifest(outs, "sweep-heating", plan.preset, plan.system,
                       sweep_heating_settings_json(plan), g.seed, sim_shots, g.workers,
                       started);
    std::cout << "sweep-heating: wrote " << outs.names.size() << " files to " << g.out_dir
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// budget
// ---------------------------------------------------------------------------

struct BudgetPlan {
    std::string preset;
    SystemParams system;  // feedback_phase already resolved (auto applied)
    bool map_enabled = true;
    bool map_ideal = true;
    std::vector<double> map_chi_hz;
    std::vector<double> map_tm;
};

json budget_settings_json(const BudgetPlan& plan) {
    return {{"preset", plan.preset},
            {"system", json_from_params(plan.system)},
            {"map_enabled", plan.map_enabled},
            {"map_ideal", plan.map_ideal},
            {"map_chi_hz", plan.map_chi_hz},
            {"map_tm", plan.map_tm}};
}

BudgetPlan budget_plan_from_json(const json& settings) {
    BudgetPlan plan;
    plan.preset = settings.at("preset").get<std::string>();
    plan.system = params_from_json(settings.at("system"));
    plan.map_enabled = settings.at("map_enabled").get<bool>();
    plan.map_ideal = settings.at("map_ideal").get<bool>();
    plan.map_chi_hz = settings.at("map_chi_hz").get<std::vector<double>>();
    plan.map_tm = settings.at("map_tm").get<std::vector<double>>();
    return plan;
}

void write_map_csv(Outputs& outs, const std::string& name, const DephasingMap& m) {
    CsvWriter csv(outs.path(name), {"chi_hz", "t_m", "tphi"});
    for (std::size_t i = 0; i < m.chi_grid.size(); ++i)
        for (std::size_t j = 0; j < m.tm_grid.size(); ++j)
            csv.row({m.chi_grid[i] / two_pi, m.tm_grid[j],
                     m.tphi[i * m.tm_grid.size() + j]});
    csv.close();
}

int cmd_budget(const BudgetPlan& plan, const GlobalArgs& g) {
    const std::string started = iso_utc_now();
    Outputs outs(g.out_dir);
    const ValidatedParams vp = validate(plan.system);

    const BudgetReport rep = event_budget(vp, vp.feedback_phase);
    CsvWriter csv(outs.path("budget.csv"),
                  {"label", "probability", "magnitude", "theta_i0", "alpha", "re_coherence",
                   "im_coherence", "dephasing_rate"});
    for (const auto& t : rep.terms)
        csv.row_text({t.label, format_number(t.probability), format_number(t.magnitude),
                      format_number(t.theta_i0), format_number((long long)t.alpha),
                      format_number(t.coherence.real()), format_number(t.coherence.imag()),
                      format_number(t.dephasing_rate)});
    csv.close();

    const OptimalPhase sa = optimal_phase(vp);
    const double refined = refine_optimal_phase(vp);
    json jb = {
        {"theta_tilde_used", rep.theta_tilde},
        {"theta_tilde_small_angle", sa.theta_tilde},
        {"theta_tilde_refined", refined},
        {"small_angle_degenerate", sa.degenerate},
        {"total_rate", rep.total_rate},
        {"total_tphi", finite_or_null(rep.total_tphi)},
        {"postselected_rate", rep.postselected_rate},
        {"postselected_tphi", finite_or_null(rep.postselected_tphi)},
        {"erasure_rate", rep.erasure_rate},
        {"idle_rate", dephasing_idle(vp)},
        {"ideal_feedback_rate", dephasing_feedback_ideal(vp)},
        {"no_phase_correction_rate", dephasing_no_phase_correction(vp)},
        {"readout_fidelity", discrimination_fidelity(vp.p_e_given_g, vp.p_g_given_e)},
    };
    std::ofstream jf(outs.path("budget.json"), std::ios::binary);
    jf << jb.dump(2) << "\n";
    jf.close();

    if (plan.map_enabled) {
        std::vector<double> chis;
        chis.reserve(plan.map_chi_hz.size());
        for (double f : plan.map_chi_hz) chis.push_back(two_pi * f);
        const auto with_phase =
            dephasing_map(chis, plan.map_tm, vp, MapMode::WithPhase, plan.map_ideal);
        const auto without_phase =
            dephasing_map(chis, plan.map_tm, vp, MapMode::WithoutPhase, plan.map_ideal);
        const auto postselected =
            dephasing_map(chis, plan.map_tm, vp, MapMode::Postselected, plan.map_ideal);
        write_map_csv(outs, "map_with_phase.csv", with_phase);
        write_map_csv(outs, "map_without_phase.csv", without_phase);
        write_map_csv(outs, "map_postselected.csv", postselected);

        // 1-D cut at the configured chi for the plot
        const std::vector<double> chi1{vp.chi};
        PlotSeries w{"with phase", plan.map_tm, {}}, wo{"without phase", plan.map_tm, {}},
            po{"postselected", plan.map_tm, {}};
        w.y = dephasing_map(chi1, plan.map_tm, vp, MapMode::WithPhase, plan.map_ideal).tphi;
        wo.y =
            dephasing_map(chi1, plan.map_tm, vp, MapMode::WithoutPhase, plan.map_ideal).tphi;
        po.y =
            dephasing_map(chi1, plan.map_tm, vp, MapMode::Postselected, plan.map_ideal).tphi;
        write_line_svg(outs.path("budget_tphi_vs_tm.svg"),
                       "predicted dephasing time vs t_m", "t_m (s)", "T_phi (s)",
                       {w, wo, po}, true);
    }

    write_run_manifest(outs, "budget", plan.preset, plan.system, budget_settings_json(plan),
                       g.seed, 0, g.workers, started);
    std::cout << "budget: wrote " << outs.names.size() << " files to " << g.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// hmm
// ---------------------------------------------------------------------------

struct HmmPlan {
    std::string preset;
    SystemParams system;  // only t_m is used
    HmmLambda truth{0.06, 0.14, 10e3, 56e3};
    HmmLambda guess{0.12, 0.25, 22e3, 30e3};
    int max_iter = 300;
    double tol = 1e-9;
    bool free_initial = false;
    int svg_window = 400;
};

json lambda_to_json(const HmmLambda& l) {
    return {{"p_e_given_g", l.p_e_given_g},
            {"p_g_given_e", l.p_g_given_e},
            {"gamma_up", l.gamma_up},
            {"gamma", l.gamma}};
}

HmmLambda lambda_from_json(const json& j) {
    return {j.at("p_e_given_g").get<double>(), j.at("p_g_given_e").get<double>(),
            j.at("gamma_up").get<double>(), j.at("gamma").get<double>()};
}

json hmm_settings_json(const HmmPlan& plan) {
    return {{"preset", plan.preset},
            {"system", json_from_params(plan.system)},
            {"truth", lambda_to_json(plan.truth)},
            {"guess", lambda_to_json(plan.guess)},
            {"max_iter", plan.max_iter},
            {"tol", plan.tol},
            {"free_initial", plan.free_initial},
            {"svg_window", plan.svg_window}};
}

HmmPlan hmm_plan_from_json(const json& settings) {
    HmmPlan plan;
    plan.preset = settings.at("preset").get<std::string>();
    plan.system = params_from_json(settings.at("system"));
    plan.truth = lambda_from_json(settings.at("truth"));
    plan.guess = lambda_from_json(settings.at("guess"));
    plan.max_iter = settings.at("max_iter").get<int>();
    plan.tol = settings.at("tol").get<double>();
    plan.free_initial = settings.at("free_initial").get<bool>();
    plan.svg_window = settings.at("svg_window").get<int>();
    return plan;
}

int cmd_hmm(const HmmPlan& plan, const GlobalArgs& g, std::uint64_t steps) {
    const std::string started = iso_utc_now();
    Outputs outs(g.out_dir);
    const double t_m = plan.system.t_m;

    const SimulatedRecord sim = simulate_record(plan.truth, t_m, steps, g.seed);
    {
        std::ofstream os(outs.path("observations.txt"), std::ios::binary);
        save_observations(os, sim.record);
    }
    {
        json rle = {{"t_m", t_m}, {"runs", json::array()}};
        for (const auto& [val, count] : rle_encode(sim.record.outcomes))
            rle["runs"].push_back({val, count});
        std::ofstream os(outs.path("observations_rle.json"), std::ios::binary);
        os << rle.dump() << "\n";
    }

    const HmmModel truth_model = build_model(plan.truth, t_m);
    const InferenceResult inf = smooth(sim.record, truth_model);
    const auto states = reconstruct(sim.record, truth_model);

    std::size_t agree_smoothed = 0, agree_raw = 0;
    CsvWriter csv(outs.path("posterior.csv"),
                  {"step", "outcome", "p_excited", "map_state", "true_state"});
    for (std::size_t k = 0; k < steps; ++k) {
        const int truth_k = sim.truth[k] == AncillaState::Excited;
        const int map_k = states[k] == AncillaState::Excited;
        agree_smoothed += map_k == truth_k;
        agree_raw += int(sim.record.outcomes[k]) == truth_k;
        csv.row({double(k), double(sim.record.outcomes[k]), inf.smoothed[k][1],
                 double(map_k), double(truth_k)});
    }
    csv.close();

    const BaumWelchResult bw =
        baum_welch(sim.record, plan.guess, plan.max_iter, plan.tol, plan.free_initial);
    const double ll_truth = forward(sim.record, truth_model).log_likelihood;

    json report = {
        {"command", "hmm"},
        {"steps", steps},
        {"lambda_true", lambda_to_json(plan.truth)},
        {"lambda_guess", lambda_to_json(plan.guess)},
        {"lambda_fit", lambda_to_json(bw.lambda)},
        {"fit_p_up", bw.model.transition[0][1]},
        {"fit_p_down", bw.model.transition[1][0]},
        {"iterations", bw.iterations},
        {"converged", bw.converged},
        {"log_likelihood_first", bw.log_likelihood_trace.front()},
        {"log_likelihood_last", bw.log_likelihood_trace.back()},
        {"log_likelihood_true_model", ll_truth},
        {"accuracy_smoothed", double(agree_smoothed) / double(steps)},
        {"accuracy_raw_readout", double(agree_raw) / double(steps)},
    };
    std::ofstream rep(outs.path("hmm_report.json"), std::ios::binary);
    rep << report.dump(2) << "\n";
    rep.close();

    const std::size_t window = std::min<std::size_t>(steps, std::size_t(plan.svg_window));
    PlotSeries post{"P(excited)", {}, {}}, truth_ps{"true state", {}, {}};
    for (std::size_t k = 0; k < window; ++k) {
        post.x.push_back(double(k));
        post.y.push_back(inf.smoothed[k][1]);
        truth_ps.x.push_back(double(k));
        truth_ps.y.push_back(sim.truth[k] == AncillaState::Excited ? 1.0 : 0.0);
    }
    write_line_svg(outs.path("hmm.svg"), "smoothed posterior vs true state", "step",
                   "P(excited)", {post, truth_ps});

    write_run_manifest(outs, "hmm", plan.preset, plan.system, hmm_settings_json(plan),
                       g.seed, steps, g.workers, started);
    std::cout << "hmm: wrote " << outs.names.size() << " files to " << g.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct CheckState {
    int failures = 0;
    void report(const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
        if (!ok) ++failures;
    }
};

// Simpson quadrature oracle for the surviving-excitation coherence: average
// e^{i chi tau} over occupation tau with density gamma e^{-gamma tau} on
// [0, t_m], normalized by the in-window decay weight.
cplx quad_event1(const ValidatedParams& p, int n) {
    auto f = [&](double tau) {
        return std::exp(cplx(-p.gamma * tau, p.chi * tau));
    };
    cplx s = f(0.0) + f(p.t_m);
    for (int k = 1; k < n; ++k) s += f(p.t_m * k / n) * ((k % 2) ? 4.0 : 2.0);
    s *= p.t_m / n / 3.0;
    return s * p.gamma / -std::expm1(-p.gamma * p.t_m);
}

int cmd_check(const GlobalArgs& g, const Config& cfg) {
    CheckState st;
    const ResolvedSystem rs = resolve_system("repeated", g, cfg);
    const std::vector<ValidatedParams> sets = {validate(preset_idle()),
                                               validate(preset_repeated()), rs.params};
    const std::vector<std::string> names = {"idle-preset", "repeated-preset", "configured"};

    for (std::size_t i = 0; i < sets.size(); ++i) {
        const ValidatedParams& p = sets[i];
        const std::string& tag = names[i];

        {  // interval probabilities form a distribution
            const IntervalProbs ip = interval_probabilities(p);
            const double gap = std::abs(ip.p0 + ip.p1 + ip.p2 - 1.0);
            st.report("probability-closure [" + tag + "]",
                      gap < 1e-12 && ip.p0 >= 0 && ip.p1 >= 0 && ip.p2 >= 0,
                      "|p0+p1+p2-1| = " + format_number(gap));
        }
        {  // idle closed form against the exact two-state eigenvalue
            const double a = p.gamma_up, b = p.gamma;
            const cplx tr(-a - b, p.chi), det = cplx(-a, 0) * cplx(-b, p.chi) - cplx(a * b, 0);
            const cplx disc = std::sqrt(tr * tr - 4.0 * det);
            const cplx slow = (tr + disc) / 2.0;
            const double exact = -slow.real();
            const double closed = dephasing_idle(p);
            const double rel = std::abs(closed - exact) / exact;
            st.report("idle-rate-eigenvalue [" + tag + "]", rel < 2e-4,
                      "relative gap = " + format_number(rel));
        }
        {  // conditioned-coherence closed form against quadrature
            const cplx closed = event1_bare_coherence(p);
            const cplx quad = quad_event1(p, 20000);
            const double gap = std::abs(closed - quad);
            st.report("event1-quadrature [" + tag + "]", gap < 1e-8,
                      "|closed - quadrature| = " + format_number(gap));
        }
        {  // refined correction phase is stationary and never worse than zero
            const double theta = refine_optimal_phase(p);
            const BudgetReport rep = event_budget(p, theta);
            const double h = 1e-6;
            const double fd = (budget_rate(rep.terms, p.t_m, theta + h) -
                               budget_rate(rep.terms, p.t_m, theta - h)) /
                              (2.0 * h);
            const double at_zero = event_budget(p, 0.0).total_rate;
            const bool ok =
                std::abs(fd) < 1e-3 * rep.total_rate && rep.total_rate <= at_zero + 1e-12;
            st.report("refined-phase-stationary [" + tag + "]", ok,
                      "|d rate/d theta| = " + format_number(std::abs(fd)) +
                          ", rate(theta*) - rate(0) = " +
                          format_number(rep.total_rate - at_zero));
        }
    }

    {  // small-angle optimum tracks the refined one in the small-phase regime
        ValidatedParams q = sets[1];
        q.chi = 0.2 / q.t_m;
        q.theta_0 *= 0.1;
        const double sa = optimal_phase(q).theta_tilde;
        const double refined = refine_optimal_phase(q);
        const double rate_sa = event_budget(q, sa).total_rate;
        const double rate_ref = event_budget(q, refined).total_rate;
        const bool ok = rate_sa <= rate_ref * 1.01 + 1e-15;
        st.report("small-angle-phase", ok,
                  "rate(small-angle)/rate(refined) = " + format_number(rate_sa / rate_ref));
    }
    {  // budget with ideal readout approaches the idle rate at long windows
        ValidatedParams q = sets[1];
        q.p_e_given_g = 0.0;
        q.p_g_given_e = 0.0;
        q.c_ro = 1.0;
        q.theta_0 = 0.0;
        q.t_g = 0.0;
        q.t_m = 50.0 / q.gamma;
        const double fb = event_budget(q, 0.0).total_rate;
        const double idle = dephasing_idle(q);
        const double rel = std::abs(fb - idle) / idle;
        st.report("long-window-convergence", rel < 1e-3,
                  "relative gap at gamma*t_m = 50: " + format_number(rel));
    }
    {  // map ordering: correction never hurts, postselection never hurts more
        const std::vector<double> chis = {two_pi * 40e3, two_pi * 73.06e3, two_pi * 200e3};
        const std::vector<double> tms = {1e-6, 2.6e-6, 8e-6};
        const auto w = dephasing_map(chis, tms, sets[1], MapMode::WithPhase);
        const auto wo = dephasing_map(chis, tms, sets[1], MapMode::WithoutPhase);
        const auto po = dephasing_map(chis, tms, sets[1], MapMode::Postselected);
        bool ok = true;
        for (std::size_t k = 0; k < w.tphi.size(); ++k)
            ok = ok && w.tphi[k] >= wo.tphi[k] * (1.0 - 1e-9) &&
                 po.tphi[k] >= w.tphi[k] * (1.0 - 1e-9);
        st.report("map-ordering", ok, "postselected >= with-phase >= without-phase");
    }
    {  // symmetric decision boundary gives symmetric confusion
        const ConfusionPair c = gaussian_confusion(4.0, 0.0);
        const double gap = std::abs(c.p_e_given_g - c.p_g_given_e);
        st.report("confusion-symmetry", gap < 1e-15,
                  "|p_eg - p_ge| at the midpoint = " + format_number(gap));
    }

    std::cout << (st.failures == 0 ? "check: all comparisons passed"
                                   : "check: " + std::to_string(st.failures) + " failed")
              << "\n";
    return st.failures == 0 ? 0 : 4;
}

// ---------------------------------------------------------------------------
// plan construction from config + flags
// ---------------------------------------------------------------------------

struct DecayCliArgs {
    std::string modes;
    double horizon = -1.0;
    int points = -1;
    bool dump_shots = false;
};

DecayPlan build_decay_plan(const GlobalArgs& g, const Config& cfg, const DecayCliArgs& a) {
    DecayPlan plan;
    const std::string mode_csv =
        !a.modes.empty() ? a.modes : cfg.text("decay", "modes", "idle,feedback,postselected");
    for (const std::string& name : split_csv(mode_csv)) {
        if (name != "idle" && name != "feedback" && name != "postselected")
            throw std::invalid_argument("unknown decay mode: " + name +
                                        " (expected idle, feedback, postselected)");
        const ResolvedSystem rs =
            resolve_system(name == "idle" ? "idle" : "repeated", g, cfg, name != "idle");
        double horizon = a.horizon > 0.0
                             ? a.horizon
                             : cfg.number("decay", "horizon_" + name,
                                          cfg.number("decay", "horizon",
                                                     name == "idle" ? 8e-3 : 24e-3));
        if (!(horizon > 0.0)) throw std::invalid_argument("horizon: non-positive time");
        plan.modes.push_back({name, rs.preset, rs.params, horizon});
    }
    if (plan.modes.empty()) throw std::invalid_argument("decay: no modes selected");
    plan.points = a.points > 0 ? a.points : int(cfg.integer("decay", "points", 10));
    plan.survival_points = int(cfg.integer("decay", "survival_points", 12));
    plan.dump_shots = a.dump_shots || cfg.flag("decay", "dump_shots", false);
    if (plan.points < 3) throw std::invalid_argument("decay: need at least 3 points");
    return plan;
}

SweepTmPlan build_sweep_tm_plan(const GlobalArgs& g, const Config& cfg, double tm_min,
                                double tm_max, int points) {
    SweepTmPlan plan;
    const ResolvedSystem rs = resolve_system("repeated", g, cfg);
    plan.preset = rs.preset;
    plan.system = rs.params;
    if (tm_min <= 0.0) tm_min = cfg.number("sweep-tm", "tm_min", 0.4e-6);
    if (tm_max <= 0.0) tm_max = cfg.number("sweep-tm", "tm_max", 13e-6);
    if (points <= 0) points = int(cfg.integer("sweep-tm", "points", 14));
    if (!(tm_min > 0.0) || !(tm_max > tm_min))
        throw std::invalid_argument("sweep-tm: need 0 < tm_min < tm_max");
    plan.tm_grid = linspace(tm_min, tm_max, points);
    plan.fringe_points = int(cfg.integer("sweep-tm", "fringe_points", 12));
    plan.fringe_shots = cfg.integer("sweep-tm", "fringe_shots", 4000);
    if (plan.fringe_points < 4)
        throw std::invalid_argument("sweep-tm: fringe needs at least 4 phases");
    return plan;
}

SweepHeatingPlan build_sweep_heating_plan(const GlobalArgs& g, const Config& cfg,
                                          double gu_min, double gu_max, int points) {
    SweepHeatingPlan plan;
    const ResolvedSystem rs = resolve_system("repeated", g, cfg);
    plan.preset = rs.preset;
    plan.system = rs.params;
    // re-optimize the phase per point unless a numeric phase was configured
    plan.auto_phase = rs.feedback_auto || !cfg.has("", "feedback_phase");
    if (gu_min <= 0.0) gu_min = cfg.number("sweep-heating", "gu_min", 50.0);
    if (gu_max <= 0.0) gu_max = cfg.number("sweep-heating", "gu_max", 3000.0);
    if (points <= 0) points = int(cfg.integer("sweep-heating", "points", 13));
    if (!(gu_min > 0.0) || !(gu_max > gu_min))
        throw std::invalid_argument("sweep-heating: need 0 < gu_min < gu_max");
    plan.gu_grid = linspace(gu_min, gu_max, points);
    plan.sim_points = int(cfg.integer("sweep-heating", "sim_points", 6));
    return plan;
}

BudgetPlan build_budget_plan(const GlobalArgs& g, const Config& cfg, bool no_map) {
    BudgetPlan plan;
    const ResolvedSystem rs = resolve_system("repeated", g, cfg, true);
    plan.preset = rs.preset;
    plan.system = rs.params;
    plan.map_enabled = no_map ? false : cfg.flag("map", "enabled", true);
    plan.map_ideal = cfg.flag("map", "ideal", true);
    plan.map_chi_hz = logspace(cfg.number("map", "chi_min_hz", 20e3),
                               cfg.number("map", "chi_max_hz", 400e3),
                               int(cfg.integer("map", "chi_points", 21)));
    plan.map_tm = logspace(cfg.number("map", "tm_min", 0.3e-6),
                           cfg.number("map", "tm_max", 20e-6),
                           int(cfg.integer("map", "tm_points", 21)));
    return plan;
}

HmmPlan build_hmm_plan(const GlobalArgs& g, const Config& cfg) {
    HmmPlan plan;
    const ResolvedSystem rs = resolve_system("repeated", g, cfg);
    plan.preset = rs.preset;
    plan.system = rs.params;
    plan.truth.p_e_given_g = cfg.number("hmm", "p_e_given_g", plan.truth.p_e_given_g);
    plan.truth.p_g_given_e = cfg.number("hmm", "p_g_given_e", plan.truth.p_g_given_e);
    plan.truth.gamma_up = cfg.number("hmm", "gamma_up", plan.truth.gamma_up);
    plan.truth.gamma = cfg.number("hmm", "gamma", plan.truth.gamma);
    plan.guess.p_e_given_g = cfg.number("hmm", "guess_p_e_given_g", plan.guess.p_e_given_g);
    plan.guess.p_g_given_e = cfg.number("hmm", "guess_p_g_given_e", plan.guess.p_g_given_e);
    plan.guess.gamma_up = cfg.number("hmm", "guess_gamma_up", plan.guess.gamma_up);
    plan.guess.gamma = cfg.number("hmm", "guess_gamma", plan.guess.gamma);
    plan.max_iter = int(cfg.integer("hmm", "max_iter", plan.max_iter));
    plan.tol = cfg.number("hmm", "tol", plan.tol);
    plan.free_initial = cfg.flag("hmm", "free_initial", plan.free_initial);
    plan.svg_window = int(cfg.integer("hmm", "svg_window", plan.svg_window));
    return plan;
}

std::uint64_t effective_shots(long long cli_shots, const Config& cfg,
                              const std::string& section, const std::string& key,
                              long long fallback) {
    if (cli_shots >= 0) return std::uint64_t(cli_shots);
    const long long v = cfg.integer(section, key, fallback);
    if (v < 0) throw std::invalid_argument("config " + section + "." + key + ": negative");
    return std::uint64_t(v);
}

// ---------------------------------------------------------------------------

int dispatch_replay(const GlobalArgs& g, const std::string& requested) {
    const RunManifest m = load_manifest(g.from_manifest);
    if (!requested.empty() && requested != m.command)
        throw std::invalid_argument("manifest records command '" + m.command +
                                    "' but '" + requested + "' was requested");
    GlobalArgs rg = g;
    rg.seed = m.seed;
    std::cout << "replaying " << m.command << " from " << g.from_manifest << " (seed "
              << m.seed << ", shots " << m.shots << ")\n";
    if (m.command == "decay") return cmd_decay(decay_plan_from_json(m.settings), rg, m.shots);
    if (m.command == "sweep-tm")
        return cmd_sweep_tm(sweep_tm_plan_from_json(m.settings), rg, m.shots);
    if (m.command == "sweep-heating")
        return cmd_sweep_heating(sweep_heating_plan_from_json(m.settings), rg, m.shots);
    if (m.command == "budget") return cmd_budget(budget_plan_from_json(m.settings), rg);
    if (m.command == "hmm") return cmd_hmm(hmm_plan_from_json(m.settings), rg, m.shots);
    throw std::invalid_argument("manifest command not replayable: " + m.command);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cavity-qubit dephasing simulator and analytics toolkit"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key = value configuration file");
    app.add_option("--preset", g.preset, "parameter preset for every mode")
        ->check(CLI::IsMember({"idle", "repeated"}));
    app.add_option("--seed", g.seed, "master random seed");
    app.add_option("--shots", g.shots,
                   "shots per point (decay), samples per point (sweep-tm), steps (hmm)");
    app.add_option("--workers", g.workers, "worker threads; results are identical for any count")
        ->check(CLI::Range(1u, 256u));
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--from-manifest", g.from_manifest,
                   "replay a previous run from its manifest.json");

    DecayCliArgs da;
    auto* sub_decay = app.add_subcommand("decay", "simulate coherence decay curves");
    sub_decay->add_option("--modes", da.modes, "comma list: idle,feedback,postselected");
    sub_decay->add_option("--horizon", da.horizon, "longest evolution time (s)");
    sub_decay->add_option("--points", da.points, "number of time points");
    sub_decay->add_flag("--dump-shots", da.dump_shots, "write per-shot phase records");

    double tm_min = -1, tm_max = -1;
    int tm_points = -1;
    auto* sub_tm =
        app.add_subcommand("sweep-tm", "conditioned single-excitation coherence vs t_m");
    sub_tm->add_option("--tm-min", tm_min, "smallest readout interval (s)");
    sub_tm->add_option("--tm-max", tm_max, "largest readout interval (s)");
    sub_tm->add_option("--points", tm_points, "number of grid points");

    double gu_min = -1, gu_max = -1;
    int gu_points = -1;
    auto* sub_heat =
        app.add_subcommand("sweep-heating", "dephasing rates vs excitation rate");
    sub_heat->add_option("--gu-min", gu_min, "smallest excitation rate (1/s)");
    sub_heat->add_option("--gu-max", gu_max, "largest excitation rate (1/s)");
    sub_heat->add_option("--points", gu_points, "number of grid points");

    bool no_map = false;
    auto* sub_budget =
        app.add_subcommand("budget", "per-event error budget and dephasing maps");
    sub_budget->add_flag("--no-map", no_map, "skip the (chi, t_m) map output");

    auto* sub_hmm =
        app.add_subcommand("hmm", "hidden-state inference on a simulated record");
    auto* sub_check = app.add_subcommand("check", "closed-form self-consistency checks");
    (void)sub_hmm;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (!g.from_manifest.empty()) {
            const auto subs = app.get_subcommands();
            return dispatch_replay(g, subs.empty() ? "" : subs.front()->get_name());
        }
        if (app.get_subcommands().empty())
            throw std::invalid_argument("missing subcommand (try --help)");

        const Config cfg =
            g.config_path.empty() ? Config() : Config::load(g.config_path);

        if (sub_decay->parsed())
            return cmd_decay(build_decay_plan(g, cfg, da), g,
                             effective_shots(g.shots, cfg, "decay", "shots", 2000));
        if (sub_tm->parsed())
            return cmd_sweep_tm(build_sweep_tm_plan(g, cfg, tm_min, tm_max, tm_points), g,
                                effective_shots(g.shots, cfg, "sweep-tm", "samples", 100000));
        if (sub_heat->parsed())
            return cmd_sweep_heating(
                build_sweep_heating_plan(g, cfg, gu_min, gu_max, gu_points), g,
                effective_shots(g.shots, cfg, "sweep-heating", "sim_shots", 0));
        if (sub_budget->parsed()) return cmd_budget(build_budget_plan(g, cfg, no_map), g);
        if (app.got_subcommand("hmm"))
            return cmd_hmm(build_hmm_plan(g, cfg), g,
                           effective_shots(g.shots, cfg, "hmm", "steps", 20000));
        if (sub_check->parsed()) return cmd_check(g, cfg);
        throw std::invalid_argument("missing subcommand (try --help)");
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
}
