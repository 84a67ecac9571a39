#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace cavfb {

struct CycleRecord {
    double occupation = 0.0;   // time spent excited within this window
    bool outcome_e = false;    // reported readout outcome
    AncillaState true_state = AncillaState::Ground;  // state at the readout instant
    bool reset_applied = false;
    double correction = 0.0;   // correction phase added on this readout
};

struct ShotRecord {
    double theta_net = 0.0;    // chi * occupation + corrections + per-detection offsets
    double occupation = 0.0;   // total time spent excited
    double duration = 0.0;
    int n_measurements = 0;
    int k_detected = 0;
    int first_detection_cycle = -1;  // -1 when nothing was detected
    bool erasure = false;            // at least one detection
    std::vector<CycleRecord> cycles; // filled only when record_cycles is set
};

enum class SamplingMode { Direct, Conditioned };

struct ProtocolConfig {
    double duration = 0.0;
    bool measurements_enabled = true;
    bool reset_enabled = true;
    bool feedback_enabled = true;
    AncillaState initial_state = AncillaState::Ground;
    bool record_cycles = false;
    std::uint64_t rng_seed = 1;
    SamplingMode sampling_mode = SamplingMode::Direct;
};

inline AncillaState flipped(AncillaState s) {
    return s == AncillaState::Ground ? AncillaState::Excited : AncillaState::Ground;
}

// Exact two-state CTMC evolution over dt via iterated exponential holding
// times. Adds the time spent excited to occupation and returns the final state.
inline AncillaState evolve_ctmc(AncillaState s, double dt, const ValidatedParams& p,
                                Rng& rng, double& occupation) {
    double remaining = dt;
    while (remaining > 0.0) {
        const double rate = (s == AncillaState::Ground) ? p.gamma_up : p.gamma;
        const double hold = rng.exponential(rate);
        if (hold >= remaining) {
            if (s == AncillaState::Excited) occupation += remaining;
            return s;
        }
        if (s == AncillaState::Excited) occupation += hold;
        remaining -= hold;
        s = flipped(s);
    }
    return s;
}

// Instantaneous projective readout through the classical confusion channel.
inline bool measure(AncillaState s, const ValidatedParams& p, Rng& rng) {
    return s == AncillaState::Excited ? !rng.bernoulli(p.p_g_given_e)
                                      : rng.bernoulli(p.p_e_given_g);
}

inline void check_protocol(const ProtocolConfig& cfg, const ValidatedParams& p) {
    if (!(cfg.duration > 0.0)) throw std::invalid_argument("duration: non-positive time");
    if (cfg.measurements_enabled && cfg.duration < p.t_m)
        throw std::invalid_argument("duration shorter than one measurement interval");
}

// One experimental realization. Readouts fire every t_m (duration rounded down
// to whole cycles); a detection optionally schedules a reset that completes
// t_g into the next window and adds the correction phase; each readout whose
// true state is excited also imprints the offset theta_0. A reset still
// pending after the final readout is carried out before the shot closes.
inline ShotRecord run_shot(const ProtocolConfig& cfg, const ValidatedParams& p) {
    check_protocol(cfg, p);
    Rng rng(cfg.rng_seed);
    ShotRecord rec;
    rec.duration = cfg.duration;
    AncillaState s = cfg.initial_state;

    if (!cfg.measurements_enabled) {
        double occ = 0.0;
        evolve_ctmc(s, cfg.duration, p, rng, occ);
        rec.occupation = occ;
        rec.theta_net = p.chi * occ;
        return rec;
    }

    const int n = static_cast<int>(std::floor(cfg.duration / p.t_m + 1e-9));
    rec.n_measurements = n;
    if (cfg.record_cycles) rec.cycles.resize(static_cast<std::size_t>(n));
    bool pending_reset = false;
    double theta = 0.0, occ_total = 0.0;

    for (int j = 0; j < n; ++j) {
        double occ = 0.0;
        if (pending_reset) {
            s = evolve_ctmc(s, p.t_g, p, rng, occ);
            s = flipped(s);
            pending_reset = false;
            s = evolve_ctmc(s, p.t_m - p.t_g, p, rng, occ);
        } else {
            s = evolve_ctmc(s, p.t_m, p, rng, occ);
        }
        const AncillaState true_state = s;
        const bool outcome = measure(s, p, rng);
        theta += p.chi * occ;
        occ_total += occ;
        if (true_state == AncillaState::Excited) theta += p.theta_0;
        double corr = 0.0;
        if (outcome) {
            ++rec.k_detected;
            if (rec.first_detection_cycle < 0) rec.first_detection_cycle = j;
            if (cfg.feedback_enabled) {
                corr = p.feedback_phase;
                theta += corr;
            }
            if (cfg.reset_enabled) pending_reset = true;
        }
        if (cfg.record_cycles) {
            CycleRecord& c = rec.cycles[static_cast<std::size_t>(j)];
            c.occupation = occ;
            c.outcome_e = outcome;
            c.true_state = true_state;
            c.reset_applied = outcome && cfg.reset_enabled;
            c.correction = corr;
        }
    }
    if (pending_reset) {
        double occ = 0.0;
        s = evolve_ctmc(s, p.t_g, p, rng, occ);
        s = flipped(s);
        theta += p.chi * occ;
        occ_total += occ;
        if (cfg.record_cycles && n > 0) rec.cycles[static_cast<std::size_t>(n - 1)].occupation += occ;
    }
    rec.theta_net = theta;
    rec.occupation = occ_total;
    rec.erasure = rec.k_detected > 0;
    return rec;
}

// Ensemble with per-shot RNG streams derived from one master seed: shot i is
// bit-identical no matter how many workers run the loop.
inline std::vector<ShotRecord> run_ensemble(const ProtocolConfig& cfg, const ValidatedParams& p,
                                            std::size_t n_shots, std::uint64_t master_seed,
                                            unsigned n_workers = 1) {
    check_protocol(cfg, p);
    std::vector<ShotRecord> out(n_shots);
    parallel_for(n_shots, n_workers, [&](std::size_t i) {
        ProtocolConfig c = cfg;
        c.rng_seed = Rng::derive_stream_seed(master_seed, i);
        out[i] = run_shot(c, p);
    });
    return out;
}

struct ConditionedSample {
    double occupation = 0.0;  // time excited within the interval
    bool survived = false;    // still excited at the readout
    double weight = 0.0;      // first-order probability of an excitation this interval
};

// Importance sampler for rare excitations: condition on exactly one excitation
// in the interval (instant uniform over the window) and track its decay.
inline ConditionedSample run_conditioned_interval(const ValidatedParams& p, Rng& rng) {
    const double instant = rng.uniform() * p.t_m;
    const double remaining = p.t_m - instant;
    const double decay_after = rng.exponential(p.gamma);
    ConditionedSample s;
    s.weight = p.gamma_up * p.t_m;
    if (decay_after >= remaining) {
        s.occupation = remaining;
        s.survived = true;
    } else {
        s.occupation = decay_after;
        s.survived = false;
    }
    return s;
}

} // namespace cavfb
