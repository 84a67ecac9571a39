#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "math_util.hpp"
#include "params.hpp"

namespace cavfb {

using cplx = std::complex<double>;

// Pure dephasing rate of the cavity qubit when the ancilla shot noise is never
// interrupted: the Lorentzian-filtered telegraph result.
inline double dephasing_idle(const ValidatedParams& p) {
    return p.gamma_up * p.chi * p.chi / (p.chi * p.chi + p.gamma * p.gamma);
}

struct MagnitudePhase {
    double magnitude = 0.0;
    double phase = 0.0;
};

// Coherence left by a single excitation that survives to its readout, decay
// neglected: magnitude |sinc(chi t_m / 2)|, mean phase (chi t_m / 2 mod pi)
// plus the per-detection offset.
inline MagnitudePhase single_excitation_coherence(double chi, double t_m, double theta_0) {
    const double x = chi * t_m / 2.0;
    return {std::abs(sinc(x)), std::fmod(x, pi) + theta_0};
}

// Residual dephasing with perfect detection, reset, and phase correction:
// only the magnitude loss |sinc(chi t_m / 2)| per excitation remains.
inline double dephasing_feedback_ideal(const ValidatedParams& p) {
    return p.gamma_up * (1.0 - std::abs(sinc(p.chi * p.t_m / 2.0)));
}

// Same protocol but without the phase correction: the full interval phase is
// randomized, leaving the weaker sinc(chi t_m) suppression.
inline double dephasing_no_phase_correction(const ValidatedParams& p) {
    return p.gamma_up * (1.0 - sinc(p.chi * p.t_m));
}

struct IntervalProbs {
    double p0 = 0.0;  // no excitation this interval
    double p1 = 0.0;  // excitation survives to the readout
    double p2 = 0.0;  // excitation decays before the readout
};

// First order in gamma_up * t_m; p0 + p1 + p2 = 1 by construction.
inline IntervalProbs interval_probabilities(const ValidatedParams& p) {
    const double pup = p.gamma_up * p.t_m;
    IntervalProbs r;
    r.p1 = p.gamma_up * -std::expm1(-p.gamma * p.t_m) / p.gamma;
    r.p2 = pup - r.p1;
    r.p0 = 1.0 - pup;
    return r;
}

// Mean phase factor over excitation instants uniform in the interval, for an
// excitation still present at the readout (decay-weighted).
inline cplx event1_bare_coherence(const ValidatedParams& p) {
    const cplx s(-p.gamma, p.chi);
    const double pdown = -std::expm1(-p.gamma * p.t_m);
    return (p.gamma / pdown) * (std::exp(s * p.t_m) - 1.0) / s;
}

// Mean phase factor for an excitation that appears and decays within one
// interval, never seen by the readout.
inline cplx event2_bare_coherence(const ValidatedParams& p) {
    const cplx s(-p.gamma, p.chi);
    const IntervalProbs ip = interval_probabilities(p);
    const cplx num = std::exp(s * p.t_m) - 1.0 - s * p.t_m;
    return (p.gamma_up * p.gamma / ip.p2) * num / (s * s);
}

// Coherence of the qubit conditioned on an ancilla decay within [0, t]:
// identical in form to the surviving-excitation average with t in place of t_m.
inline cplx decay_conditioned_coherence(const ValidatedParams& p, double t) {
    const cplx s(-p.gamma, p.chi);
    const double pdown = -std::expm1(-p.gamma * t);
    return (p.gamma / pdown) * (std::exp(s * t) - 1.0) / s;
}
inline cplx decay_conditioned_coherence(const ValidatedParams& p) {
    return decay_conditioned_coherence(p, p.t_m);
}

struct EventCoherence {
    double probability = 0.0;
    cplx coherence = 0.0;
};

// Detected single excitation, including the applied correction and offset.
inline EventCoherence event1_coherence(const ValidatedParams& p, double theta_tilde) {
    const IntervalProbs ip = interval_probabilities(p);
    return {ip.p1, event1_bare_coherence(p) * std::polar(1.0, p.theta_0 + theta_tilde)};
}

// Undetected excitation (decayed before its readout); no correction applies.
inline EventCoherence event2_coherence(const ValidatedParams& p) {
    const IntervalProbs ip = interval_probabilities(p);
    return {ip.p2, event2_bare_coherence(p)};
}

// One row of the per-interval error budget. The coherence of each event is
// magnitude * exp(i * (theta_i0 + alpha * theta_tilde)): alpha counts how many
// times the applied correction enters, theta_i0 is the phase with no correction.
struct EventTerm {
    std::string label;
    double probability = 0.0;
    double magnitude = 0.0;
    double theta_i0 = 0.0;
    int alpha = 0;
    cplx coherence = 0.0;
    double dephasing_rate = 0.0;
};

struct BudgetReport {
    std::vector<EventTerm> terms;
    double theta_tilde = 0.0;
    double total_rate = 0.0;
    double total_tphi = 0.0;
    double postselected_rate = 0.0;  // rows 0a + 2a: shots with no detection kept
    double postselected_tphi = 0.0;
    double erasure_rate = 0.0;       // rate at which shots acquire >= 1 detection
};

// Dephasing rate implied by budget rows at a given correction phase.
inline double budget_rate(const std::vector<EventTerm>& rows, double t_m, double theta_tilde) {
    double s = 0.0;
    for (const auto& t : rows)
        s += t.probability * (1.0 - t.magnitude * std::cos(t.theta_i0 + t.alpha * theta_tilde));
    return s / t_m;
}

// The seven-event error budget for one measurement interval: false positives
// (0b), detected excitations with reset delayed by the gap (1a), missed
// excitations caught one interval later (1b), excitations decaying inside the
// gap after detection (1c), and invisible intra-interval excitations (2a/2b).
inline BudgetReport event_budget(const ValidatedParams& p, double theta_tilde) {
    const IntervalProbs ip = interval_probabilities(p);
    const double gap_survival = std::exp(-p.gamma * p.t_g);
    const cplx c1 = event1_bare_coherence(p);
    const cplx c2 = event2_bare_coherence(p);
    const double m1 = std::abs(c1), a1 = std::arg(c1);
    const double m2 = std::abs(c2), a2 = std::arg(c2);
    const double cro = p.c_ro, th0 = p.theta_0;
    const double ctm = p.chi * p.t_m, ctg = p.chi * p.t_g;
    const double peg = p.p_e_given_g, pge = p.p_g_given_e;

    BudgetReport r;
    r.theta_tilde = theta_tilde;
    r.terms.reserve(7);
    auto add = [&](const char* label, double prob, double mag, double ph0, int alpha) {
        EventTerm t;
        t.label = label;
        t.probability = prob;
        t.magnitude = mag;
        t.theta_i0 = wrap_angle(ph0);
        t.alpha = alpha;
        const double ph = ph0 + alpha * theta_tilde;
        t.coherence = std::polar(mag, ph);
        t.dephasing_rate = prob * (1.0 - mag * std::cos(ph)) / p.t_m;
        r.terms.push_back(std::move(t));
    };

    add("0a", ip.p0 * (1.0 - peg), cro, 0.0, 0);
    add("0b", ip.p0 * peg, cro, ctm + th0, 2);
    add("1a", ip.p1 * (1.0 - pge) * gap_survival, cro * m1, a1 + th0 + ctg, 1);
    add("1b", ip.p1 * pge, cro * m1, a1 + 2.0 * th0 + ctm + ctg, 1);
    add("1c", ip.p1 * (1.0 - pge) * (1.0 - gap_survival), cro * m1,
        a1 + 2.0 * th0 + ctm + 0.5 * ctg, 2);
    add("2a", ip.p2 * (1.0 - peg), cro * m2, a2, 0);
    add("2b", ip.p2 * peg, cro * m2, a2 + ctm + th0, 2);

    for (const auto& t : r.terms) r.total_rate += t.dephasing_rate;
    r.total_tphi = 1.0 / r.total_rate;
    r.postselected_rate = r.terms[0].dephasing_rate + r.terms[5].dephasing_rate;
    r.postselected_tphi = 1.0 / r.postselected_rate;
    r.erasure_rate = p.gamma_up + peg / p.t_m;
    return r;
}

struct OptimalPhase {
    double theta_tilde = 0.0;
    bool degenerate = false;  // no feedback-bearing weight; returned phase is 0
};

// Small-angle optimum: linearize each row's cosine about its zero-correction
// phase and solve the resulting weighted least-squares problem.
inline OptimalPhase optimal_phase(const ValidatedParams& p) {
    const BudgetReport rep = event_budget(p, 0.0);
    double num = 0.0, den = 0.0;
    for (const auto& t : rep.terms) {
        num += t.probability * t.magnitude * t.alpha * t.theta_i0;
        den += t.probability * t.magnitude * t.alpha * t.alpha;
    }
    if (!(den > 1e-30)) return {0.0, true};
    return {wrap_angle(-num / den), false};
}

// Diagnostic refinement: minimize the exact budget rate over a full period
// (256-point grid, then golden section). Never worse than theta_tilde = 0.
inline double refine_optimal_phase(const ValidatedParams& p) {
    const std::vector<EventTerm> rows = event_budget(p, 0.0).terms;
    auto f = [&](double th) { return budget_rate(rows, p.t_m, th); };
    const int n = 256;
    double best_th = 0.0, best_f = f(0.0);
    for (int k = 0; k < n; ++k) {
        const double th = -pi + (k + 1) * two_pi / n;
        const double v = f(th);
        if (v < best_f) { best_f = v; best_th = th; }
    }
    const double d = two_pi / n;
    const double th = golden_minimize(f, best_th - d, best_th + d, 1e-9);
    return f(th) <= best_f ? wrap_angle(th) : wrap_angle(best_th);
}

enum class MapMode { WithPhase, WithoutPhase, Postselected };

struct DephasingMap {
    std::vector<double> chi_grid;  // rad/s
    std::vector<double> tm_grid;   // s
    std::vector<double> tphi;      // row-major [i_chi * tm_grid.size() + j_tm]
    MapMode mode = MapMode::WithPhase;
    bool ideal = true;
};

// Budget-predicted pure dephasing time over a (chi, t_m) grid. With
// ideal = true the readout is made perfect (no confusion, no gap, no
// back-action, no offset) so only the physics of chi, gamma, gamma_up remains.
inline DephasingMap dephasing_map(const std::vector<double>& chi_grid,
                                  const std::vector<double>& tm_grid,
                                  const ValidatedParams& base, MapMode mode,
                                  bool ideal = true,
                                  std::optional<double> forced_phase = std::nullopt) {
    DephasingMap m;
    m.chi_grid = chi_grid;
    m.tm_grid = tm_grid;
    m.mode = mode;
    m.ideal = ideal;
    m.tphi.resize(chi_grid.size() * tm_grid.size());
    for (std::size_t i = 0; i < chi_grid.size(); ++i) {
        for (std::size_t j = 0; j < tm_grid.size(); ++j) {
            SystemParams q = base;
            q.chi = chi_grid[i];
            q.t_m = tm_grid[j];
            if (ideal) {
                q.t_g = 0.0;
                q.p_e_given_g = 0.0;
                q.p_g_given_e = 0.0;
                q.c_ro = 1.0;
                q.theta_0 = 0.0;
            }
            const ValidatedParams vp = validate(q);
            double rate = 0.0;
            switch (mode) {
                case MapMode::WithPhase: {
                    const double th = forced_phase ? *forced_phase : refine_optimal_phase(vp);
                    rate = event_budget(vp, th).total_rate;
                    break;
                }
                case MapMode::WithoutPhase:
                    rate = event_budget(vp, forced_phase.value_or(0.0)).total_rate;
                    break;
                case MapMode::Postselected:
                    rate = event_budget(vp, 0.0).postselected_rate;
                    break;
            }
            m.tphi[i * tm_grid.size() + j] =
                rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
        }
    }
    return m;
}

// Probability of labeling the projected ancilla state correctly, averaged over
// the two preparations.
inline double discrimination_fidelity(double p_eg, double p_ge) {
    if (p_eg < 0.0 || p_eg > 1.0 || p_ge < 0.0 || p_ge > 1.0)
        throw std::invalid_argument("probability out of range");
    return 1.0 - 0.5 * (p_eg + p_ge);
}

struct ConfusionPair {
    double p_e_given_g = 0.0;
    double p_g_given_e = 0.0;
};

// Two unit-variance quadrature distributions at +-separation/2 (excited on the
// negative side); a readout returns "e" when the integrated quadrature falls
// below the boundary.
inline ConfusionPair gaussian_confusion(double separation, double boundary) {
    if (!(separation > 0.0)) throw std::invalid_argument("separation must be positive");
    return {normal_upper_tail(separation / 2.0 - boundary),
            normal_upper_tail(boundary + separation / 2.0)};
}

struct BoundaryResult {
    double boundary = 0.0;
    double rate = 0.0;
    bool unimodal = true;
};

// Best decision boundary for the configured correction phase: scan between the
// two distribution means, then golden-section to 1e-4 sigma. If the scan shows
// several local minima the best grid point is returned with unimodal = false.
inline BoundaryResult optimize_boundary(double separation, const ValidatedParams& p) {
    if (!(separation > 0.0)) throw std::invalid_argument("separation must be positive");
    auto objective = [&](double eta) {
        const ConfusionPair c = gaussian_confusion(separation, eta);
        ValidatedParams q = p;
        q.p_e_given_g = c.p_e_given_g;
        q.p_g_given_e = c.p_g_given_e;
        return event_budget(q, p.feedback_phase).total_rate;
    };
    const int n = 129;
    const double lo = -separation / 2.0, hi = separation / 2.0;
    std::vector<double> eta(n), val(n);
    for (int k = 0; k < n; ++k) {
        eta[k] = lo + (hi - lo) * k / (n - 1);
        val[k] = objective(eta[k]);
    }
    int best = 0;
    int interior_minima = 0;
    for (int k = 0; k < n; ++k) {
        if (val[k] < val[best]) best = k;
        if (k > 0 && k < n - 1 && val[k] < val[k - 1] && val[k] < val[k + 1])
            ++interior_minima;
    }
    if (interior_minima > 1) return {eta[best], val[best], false};
    const double a = eta[std::max(best - 1, 0)];
    const double b = eta[std::min(best + 1, n - 1)];
    const double x = golden_minimize(objective, a, b, 1e-4);
    return {x, objective(x), true};
}

} // namespace cavfb
