#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "analytics.hpp"
#include "math_util.hpp"
#include "params.hpp"
#include "trajectory.hpp"

namespace cavfb {

struct CoherencePoint {
    cplx value = 0.0;
    double abs_err = 0.0;     // standard error of |value|
    std::size_t n_samples = 0;
};

using CoherenceSeries = std::vector<std::pair<double, CoherencePoint>>;

// Mean of unit phasors plus a delete-one jackknife standard error of the
// magnitude of the mean.
inline std::pair<cplx, double> mean_and_jackknife(const std::vector<cplx>& z) {
    const std::size_t n = z.size();
    if (n == 0) throw std::invalid_argument("empty sample");
    cplx sum = 0.0;
    for (const cplx& v : z) sum += v;
    const cplx mean = sum / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    double jk_mean = 0.0;
    for (const cplx& v : z) jk_mean += std::abs((sum - v) / double(n - 1));
    jk_mean /= static_cast<double>(n);
    double var = 0.0;
    for (const cplx& v : z) {
        const double d = std::abs((sum - v) / double(n - 1)) - jk_mean;
        var += d * d;
    }
    var *= double(n - 1) / double(n);
    return {mean, std::sqrt(var)};
}

// Ensemble coherence of equal-duration shots. The stochastic average over
// accumulated phases is scaled by the deterministic per-measurement readout
// factor and the cavity photon-loss envelope; the error is floored at the
// shot-noise scale 1/sqrt(2n) so later fits never see a zero weight.
inline CoherencePoint coherence_of(const std::vector<ShotRecord>& recs,
                                   const ValidatedParams& p) {
    if (recs.empty()) throw std::invalid_argument("empty record list");
    const double duration = recs.front().duration;
    const int n_meas = recs.front().n_measurements;
    for (const auto& r : recs)
        if (r.duration != duration || r.n_measurements != n_meas)
            throw std::invalid_argument("records have unequal durations");

    std::vector<cplx> z;
    z.reserve(recs.size());
    for (const auto& r : recs) z.push_back(std::polar(1.0, r.theta_net));
    auto [mean, jk] = mean_and_jackknife(z);

    const double scale = std::pow(p.c_ro, n_meas) * std::exp(-duration / (2.0 * p.t1_cavity));
    CoherencePoint pt;
    pt.n_samples = recs.size();
    pt.value = scale * mean;
    pt.abs_err = scale * std::max(jk, 1.0 / std::sqrt(2.0 * double(recs.size())));
    return pt;
}

// Probability of the bright fringe outcome for analysis phase theta.
inline double ramsey_probability(cplx coherence, double theta) {
    return 0.5 * (1.0 + std::real(coherence * std::polar(1.0, -theta)));
}

struct FringeFit {
    double magnitude = 0.0;
    double phase = 0.0;
    bool phase_unconstrained = false;  // set when the fitted magnitude vanishes
};

// Least-squares fringe: fit 2P-1 = Re C cos(theta) + Im C sin(theta) over
// analysis phases. Needs at least four distinct phases spanning at least pi.
inline FringeFit fit_fringe(const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 4)
        throw std::invalid_argument("degenerate fringe design: need >= 4 samples");
    std::set<double> distinct;
    double lo = samples.front().first, hi = samples.front().first;
    for (const auto& s : samples) {
        distinct.insert(s.first);
        lo = std::min(lo, s.first);
        hi = std::max(hi, s.first);
    }
    if (distinct.size() < 4 || hi - lo < pi - 1e-9)
        throw std::invalid_argument("degenerate fringe design: phases must span >= pi");

    double scc = 0, scs = 0, sss = 0, syc = 0, sys = 0;
    for (const auto& [th, prob] : samples) {
        const double c = std::cos(th), s = std::sin(th), y = 2.0 * prob - 1.0;
        scc += c * c;
        scs += c * s;
        sss += s * s;
        syc += y * c;
        sys += y * s;
    }
    const double det = scc * sss - scs * scs;
    if (!(std::abs(det) > 1e-12))
        throw std::invalid_argument("degenerate fringe design: singular normal equations");
    const double re = (sss * syc - scs * sys) / det;
    const double im = (scc * sys - scs * syc) / det;
    FringeFit fit;
    fit.magnitude = std::hypot(re, im);
    if (fit.magnitude < 1e-10) {
        fit.phase_unconstrained = true;
        fit.phase = 0.0;
    } else {
        fit.phase = std::atan2(im, re);
    }
    return fit;
}

// Keep only shots with exactly k detections.
inline std::vector<ShotRecord> postselect(const std::vector<ShotRecord>& recs, int k) {
    std::vector<ShotRecord> out;
    for (const auto& r : recs)
        if (r.k_detected == k) out.push_back(r);
    if (out.empty())
        throw std::invalid_argument("no records with k_detected = " + std::to_string(k) +
                                    " (0 of " + std::to_string(recs.size()) + ")");
    return out;
}

// Fraction of shots with no detection up to and including time t, for each t in
// the grid. Detections are attributed to the end of their readout window.
inline std::vector<std::pair<double, double>> survival_fraction(
    const std::vector<ShotRecord>& recs, const std::vector<double>& time_grid,
    const ValidatedParams& p) {
    if (recs.empty()) throw std::invalid_argument("empty record list");
    for (const auto& r : recs)
        if (r.n_measurements == 0)
            throw std::invalid_argument("survival requires measurement-enabled records");
    std::vector<std::pair<double, double>> out;
    out.reserve(time_grid.size());
    for (double t : time_grid) {
        std::size_t alive = 0;
        for (const auto& r : recs) {
            const double first = r.first_detection_cycle < 0
                                     ? std::numeric_limits<double>::infinity()
                                     : (r.first_detection_cycle + 1) * p.t_m;
            if (first > t) ++alive;
        }
        out.emplace_back(t, double(alive) / double(recs.size()));
    }
    return out;
}

namespace detail {

// Weighted log-linear survival slope; variance of ln S floored so S = 1 points
// keep a finite weight.
inline double survival_slope(const std::vector<std::pair<double, double>>& pts,
                             std::size_t n_shots) {
    std::vector<double> x, y, w;
    for (const auto& [t, s] : pts) {
        if (s <= 0.0) continue;
        x.push_back(t);
        y.push_back(std::log(s));
        const double var = std::max(1.0 - s, 0.5 / double(n_shots)) / (s * double(n_shots));
        w.push_back(1.0 / var);
    }
    if (x.size() < 2) throw std::runtime_error("survival fit: fewer than two usable points");
    return -weighted_linear_fit(x, y, w).slope;
}

} // namespace detail

struct SurvivalFit {
    double rate = 0.0;
    double rate_err = 0.0;
    std::vector<std::pair<double, double>> fractions;
};

// Exponential survival-rate fit with a delete-one-block jackknife over shots
// (blocks keep the error honest: the same shot enters every time bin).
inline SurvivalFit fit_survival_rate(const std::vector<ShotRecord>& recs,
                                     const std::vector<double>& time_grid,
                                     const ValidatedParams& p) {
    SurvivalFit fit;
    fit.fractions = survival_fraction(recs, time_grid, p);
    fit.rate = detail::survival_slope(fit.fractions, recs.size());

    const std::size_t n_blocks = std::min<std::size_t>(50, recs.size());
    if (n_blocks >= 2) {
        std::vector<double> slopes;
        slopes.reserve(n_blocks);
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const std::size_t lo = recs.size() * b / n_blocks;
            const std::size_t hi = recs.size() * (b + 1) / n_blocks;
            std::vector<ShotRecord> keep;
            keep.reserve(recs.size() - (hi - lo));
            for (std::size_t i = 0; i < recs.size(); ++i)
                if (i < lo || i >= hi) keep.push_back(recs[i]);
            slopes.push_back(
                detail::survival_slope(survival_fraction(keep, time_grid, p), keep.size()));
        }
        double mean = 0.0;
        for (double s : slopes) mean += s;
        mean /= double(n_blocks);
        double var = 0.0;
        for (double s : slopes) var += (s - mean) * (s - mean);
        var *= double(n_blocks - 1) / double(n_blocks);
        fit.rate_err = std::sqrt(var);
    }
    return fit;
}

struct DecayFit {
    double t2 = 0.0;
    double t2_err = 0.0;
    double amplitude = 0.0;
    double tphi = 0.0;       // 1/T_phi = 1/T2 - 1/(2 T1_cavity)
    double tphi_lo = 0.0;    // from the chi^2 + 1 profile bound
    double tphi_hi = 0.0;
    bool photon_loss_limited = false;  // T2 consistent with pure cavity loss
    double chi2 = 0.0;
    int ndof = 0;
};

// Single-exponential magnitude fit |C|(t) = A exp(-t / T2) by profile
// likelihood: the amplitude is solved analytically per decay rate, the rate is
// scanned then refined, and the one-sigma band comes from chi^2_min + 1.
inline DecayFit fit_decay(const CoherenceSeries& series, const ValidatedParams& p) {
    if (series.size() < 3) throw std::invalid_argument("fit_decay: need >= 3 points");
    for (std::size_t i = 1; i < series.size(); ++i)
        if (!(series[i].first > series[i - 1].first))
            throw std::invalid_argument("fit_decay: non-monotone times");

    std::vector<double> t, y, w;
    for (const auto& [time, pt] : series) {
        t.push_back(time);
        y.push_back(std::abs(pt.value));
        if (!(pt.abs_err > 0.0)) throw std::invalid_argument("fit_decay: non-positive error bar");
        w.push_back(1.0 / (pt.abs_err * pt.abs_err));
    }

    // Profile chi^2 over the decay rate; amplitude solved in closed form.
    auto chi2_of = [&](double r, double* amp_out = nullptr) {
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double x = std::exp(-r * t[i]);
            sxx += w[i] * x * x;
            sxy += w[i] * x * y[i];
        }
        if (!(sxx > 0.0)) return std::numeric_limits<double>::infinity();
        const double a = sxy / sxx;
        double c2 = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double resid = y[i] - a * std::exp(-r * t[i]);
            c2 += w[i] * resid * resid;
        }
        if (amp_out) *amp_out = a;
        return c2;
    };

    const double r_max = 20.0 / t.back();
    const int n_scan = 400;
    std::vector<double> grid(n_scan), prof(n_scan);
    int best = 0;
    for (int k = 0; k < n_scan; ++k) {
        grid[k] = r_max * k / (n_scan - 1);
        prof[k] = chi2_of(grid[k]);
        if (prof[k] < prof[best]) best = k;
    }
    double r_star;
    if (best == 0) {
        r_star = 0.0;
    } else if (best == n_scan - 1) {
        throw std::runtime_error("fit divergence: decay rate at scan edge");
    } else {
        r_star = golden_minimize([&](double r) { return chi2_of(r); },
                                 grid[best - 1], grid[best + 1], r_max * 1e-10);
    }
    DecayFit fit;
    const double c2_min = chi2_of(r_star, &fit.amplitude);
    if (!std::isfinite(c2_min)) throw std::runtime_error("fit divergence: non-finite chi2");
    fit.chi2 = c2_min;
    fit.ndof = static_cast<int>(t.size()) - 2;

    // chi^2_min + 1 crossings by bisection on each side.
    auto crossing = [&](double a, double b) {
        // f(a) < c2_min+1 <= f(b)
        for (int it = 0; it < 200; ++it) {
            const double m = 0.5 * (a + b);
            if (chi2_of(m) < c2_min + 1.0) a = m; else b = m;
        }
        return 0.5 * (a + b);
    };
    double r_lo = 0.0, r_hi = r_max;
    if (chi2_of(0.0) < c2_min + 1.0) r_lo = 0.0;
    else r_lo = crossing(r_star, 0.0);
    if (chi2_of(r_max) < c2_min + 1.0) r_hi = r_max;
    else r_hi = crossing(r_star, r_max);

    const double inf = std::numeric_limits<double>::infinity();
    fit.t2 = r_star > 0.0 ? 1.0 / r_star : inf;
    fit.t2_err = r_star > 0.0 ? 0.5 * (r_hi - r_lo) / (r_star * r_star) : inf;

    const double cavity_rate = 1.0 / (2.0 * p.t1_cavity);
    const double dephase_rate = r_star - cavity_rate;
    fit.photon_loss_limited = !(r_lo > cavity_rate);
    fit.tphi = dephase_rate > 0.0 ? 1.0 / dephase_rate : inf;
    fit.tphi_lo = r_hi > cavity_rate ? 1.0 / (r_hi - cavity_rate) : inf;
    fit.tphi_hi = r_lo > cavity_rate ? 1.0 / (r_lo - cavity_rate) : inf;
    return fit;
}

struct ConditionedEstimate {
    cplx c1 = 0.0;            // mean phase factor over surviving excitations
    double c1_err = 0.0;      // jackknife error of |c1|
    double survive_fraction = 0.0;
    std::size_t n_samples = 0;
};

// Direct Monte Carlo of the surviving-single-excitation coherence using the
// conditioned sampler; every sample carries one excitation, so no shots are
// wasted waiting for a rare event.
inline ConditionedEstimate estimate_event1(const ValidatedParams& p, std::size_t n,
                                           std::uint64_t master_seed, unsigned n_workers = 1) {
    if (n == 0) throw std::invalid_argument("need at least one sample");
    std::vector<ConditionedSample> samples(n);
    parallel_for(n, n_workers, [&](std::size_t i) {
        Rng rng = Rng::stream(master_seed, i);
        samples[i] = run_conditioned_interval(p, rng);
    });
    std::vector<cplx> z;
    z.reserve(n);
    for (const auto& s : samples)
        if (s.survived) z.push_back(std::polar(1.0, p.chi * s.occupation));
    ConditionedEstimate est;
    est.n_samples = n;
    est.survive_fraction = double(z.size()) / double(n);
    if (z.empty()) return est;
    auto [mean, jk] = mean_and_jackknife(z);
    est.c1 = mean;
    est.c1_err = std::max(jk, 1.0 / std::sqrt(2.0 * double(z.size())));
    return est;
}

} // namespace cavfb
