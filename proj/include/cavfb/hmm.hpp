#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "params.hpp"
#include "rng.hpp"

namespace cavfb {

// Parameter tuple of the telegraph-plus-confusion observation model.
struct HmmLambda {
    double p_e_given_g = 0.0;
    double p_g_given_e = 0.0;
    double gamma_up = 0.0;
    double gamma = 0.0;
};

// Two-state hidden Markov model over readout outcomes. Index 0 is Ground,
// index 1 is Excited; outcome 0 is "g", outcome 1 is "e".
struct HmmModel {
    std::array<std::array<double, 2>, 2> transition{};  // [from][to]
    std::array<std::array<double, 2>, 2> emission{};    // [state][outcome]
    std::array<double, 2> initial{};
    double t_m = 0.0;
};

struct ObservationRecord {
    std::vector<std::uint8_t> outcomes;  // 0 = g, 1 = e
    double t_m = 0.0;
};

inline std::array<double, 2> stationary_distribution(double p_up, double p_down) {
    const double s = p_up + p_down;
    if (!(s > 0.0)) return {1.0, 0.0};
    return {p_down / s, p_up / s};
}

inline HmmModel build_model(const HmmLambda& lam, double t_m,
                            const std::optional<std::array<double, 2>>& initial = std::nullopt) {
    if (!(t_m > 0.0)) throw std::invalid_argument("t_m: non-positive time");
    if (lam.p_e_given_g < 0.0 || lam.p_e_given_g > 1.0 ||
        lam.p_g_given_e < 0.0 || lam.p_g_given_e > 1.0)
        throw std::invalid_argument("probability out of range");
    if (lam.gamma_up < 0.0 || !(lam.gamma > 0.0))
        throw std::invalid_argument("rates must satisfy gamma_up >= 0, gamma > 0");
    const double p_up = lam.gamma_up * t_m;
    if (p_up >= 1.0) throw std::invalid_argument("gamma_up * t_m >= 1: not a probability");
    const double p_down = -std::expm1(-lam.gamma * t_m);

    HmmModel m;
    m.t_m = t_m;
    m.transition = {{{1.0 - p_up, p_up}, {p_down, 1.0 - p_down}}};
    m.emission = {{{1.0 - lam.p_e_given_g, lam.p_e_given_g},
                   {lam.p_g_given_e, 1.0 - lam.p_g_given_e}}};
    m.initial = initial ? *initial : stationary_distribution(p_up, p_down);
    return m;
}

inline HmmLambda lambda_from_model(const HmmModel& m) {
    HmmLambda lam;
    lam.p_e_given_g = m.emission[0][1];
    lam.p_g_given_e = m.emission[1][0];
    lam.gamma_up = m.transition[0][1] / m.t_m;
    const double p_down = std::min(m.transition[1][0], 1.0 - 1e-15);
    lam.gamma = -std::log1p(-p_down) / m.t_m;
    return lam;
}

struct ForwardResult {
    std::vector<std::array<double, 2>> fhat;  // filtered state distribution per step
    std::vector<double> c;                    // per-step normalizers
    double log_likelihood = 0.0;
};

// Normalized forward pass; log-likelihood is the summed log of the
// normalizers, stable for arbitrarily long records.
inline ForwardResult forward(const ObservationRecord& rec, const HmmModel& m) {
    const std::size_t n = rec.outcomes.size();
    if (n == 0) throw std::invalid_argument("empty observations");
    ForwardResult r;
    r.fhat.resize(n);
    r.c.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const int o = rec.outcomes[k] ? 1 : 0;
        std::array<double, 2> f;
        if (k == 0) {
            f = {m.initial[0] * m.emission[0][o], m.initial[1] * m.emission[1][o]};
        } else {
            const auto& prev = r.fhat[k - 1];
            for (int j = 0; j < 2; ++j)
                f[j] = (prev[0] * m.transition[0][j] + prev[1] * m.transition[1][j]) *
                       m.emission[j][o];
        }
        const double ck = f[0] + f[1];
        if (!(ck > 0.0))
            throw std::runtime_error("zero-probability observation at step " + std::to_string(k));
        r.fhat[k] = {f[0] / ck, f[1] / ck};
        r.c[k] = ck;
        r.log_likelihood += std::log(ck);
    }
    return r;
}

// Backward pass sharing the forward normalizers, so fhat * bhat is already the
// smoothed posterior.
inline std::vector<std::array<double, 2>> backward(const ObservationRecord& rec,
                                                   const HmmModel& m,
                                                   const std::vector<double>& c) {
    const std::size_t n = rec.outcomes.size();
    if (n == 0) throw std::invalid_argument("empty observations");
    if (c.size() != n) throw std::invalid_argument("normalizer count mismatch");
    std::vector<std::array<double, 2>> bhat(n);
    bhat[n - 1] = {1.0, 1.0};
    for (std::size_t k = n - 1; k-- > 0;) {
        const int o = rec.outcomes[k + 1] ? 1 : 0;
        for (int i = 0; i < 2; ++i) {
            double s = 0.0;
            for (int j = 0; j < 2; ++j)
                s += m.transition[i][j] * m.emission[j][o] * bhat[k + 1][j];
            bhat[k][i] = s / c[k + 1];
        }
    }
    return bhat;
}

inline std::vector<std::array<double, 2>> backward(const ObservationRecord& rec,
                                                   const HmmModel& m) {
    return backward(rec, m, forward(rec, m).c);
}

struct InferenceResult {
    double log_likelihood = 0.0;
    std::vector<std::array<double, 2>> smoothed;  // posterior state marginals
    std::vector<double> normalizers;
};

inline InferenceResult smooth(const ObservationRecord& rec, const HmmModel& m) {
    ForwardResult f = forward(rec, m);
    const auto b = backward(rec, m, f.c);
    InferenceResult r;
    r.log_likelihood = f.log_likelihood;
    r.normalizers = std::move(f.c);
    r.smoothed.resize(rec.outcomes.size());
    for (std::size_t k = 0; k < rec.outcomes.size(); ++k)
        r.smoothed[k] = {f.fhat[k][0] * b[k][0], f.fhat[k][1] * b[k][1]};
    return r;
}

// Most probable state per step from the smoothed marginals; ties go to Ground.
inline std::vector<AncillaState> reconstruct(const ObservationRecord& rec, const HmmModel& m) {
    const InferenceResult inf = smooth(rec, m);
    std::vector<AncillaState> out(rec.outcomes.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = inf.smoothed[k][1] > inf.smoothed[k][0] ? AncillaState::Excited
                                                         : AncillaState::Ground;
    return out;
}

struct BaumWelchResult {
    HmmLambda lambda;
    HmmModel model;
    std::vector<double> log_likelihood_trace;
    int iterations = 0;
    bool converged = false;
};

// Baum-Welch EM on one observation record. The initial distribution is held at
// the stationary distribution of the running transition matrix (free_initial
// re-estimates it instead); its likelihood share is O(1/N), so the trace stays
// monotone to well below any practical tolerance.
inline BaumWelchResult baum_welch(const ObservationRecord& rec, const HmmLambda& guess,
                                  int max_iter = 200, double tol = 1e-10,
                                  bool free_initial = false) {
    const std::size_t n = rec.outcomes.size();
    if (n == 0) throw std::invalid_argument("empty observations");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");

    BaumWelchResult res;
    res.model = build_model(guess, rec.t_m);
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < max_iter; ++it) {
        const HmmModel& m = res.model;
        ForwardResult f = forward(rec, m);
        if (!std::isfinite(f.log_likelihood))
            throw std::runtime_error("non-finite likelihood");
        const auto b = backward(rec, m, f.c);

        double gamma_sum[2] = {0.0, 0.0};        // over k = 0..n-2 (transition denominators)
        double gamma_all[2] = {0.0, 0.0};        // over all k (emission denominators)
        double gamma_emit_e[2] = {0.0, 0.0};     // outcome "e" mass per state
        double xi_sum[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        std::array<double, 2> gamma1{};
        for (std::size_t k = 0; k < n; ++k) {
            const double gk[2] = {f.fhat[k][0] * b[k][0], f.fhat[k][1] * b[k][1]};
            if (k == 0) gamma1 = {gk[0], gk[1]};
            for (int i = 0; i < 2; ++i) {
                gamma_all[i] += gk[i];
                if (rec.outcomes[k]) gamma_emit_e[i] += gk[i];
            }
            if (k + 1 < n) {
                const int o = rec.outcomes[k + 1] ? 1 : 0;
                for (int i = 0; i < 2; ++i) {
                    gamma_sum[i] += gk[i];
                    for (int j = 0; j < 2; ++j)
                        xi_sum[i][j] += f.fhat[k][i] * m.transition[i][j] *
                                        m.emission[j][o] * b[k + 1][j] / f.c[k + 1];
                }
            }
        }

        HmmModel next = m;
        if (gamma_sum[0] > 0.0)
            next.transition[0] = {xi_sum[0][0] / gamma_sum[0], xi_sum[0][1] / gamma_sum[0]};
        if (gamma_sum[1] > 0.0)
            next.transition[1] = {xi_sum[1][0] / gamma_sum[1], xi_sum[1][1] / gamma_sum[1]};
        if (gamma_all[0] > 0.0) {
            const double peg = gamma_emit_e[0] / gamma_all[0];
            next.emission[0] = {1.0 - peg, peg};
        }
        if (gamma_all[1] > 0.0) {
            const double pge = 1.0 - gamma_emit_e[1] / gamma_all[1];
            next.emission[1] = {pge, 1.0 - pge};
        }
        next.initial = free_initial
                           ? gamma1
                           : stationary_distribution(next.transition[0][1], next.transition[1][0]);

        res.model = next;
        res.log_likelihood_trace.push_back(f.log_likelihood);
        res.iterations = it + 1;
        if (it > 0 && std::abs(f.log_likelihood - prev_ll) < tol) {
            res.converged = true;
            break;
        }
        prev_ll = f.log_likelihood;
    }
    res.lambda = lambda_from_model(res.model);
    return res;
}

struct BruteForceResult {
    double log_likelihood = 0.0;
    std::vector<std::array<double, 2>> marginals;
};

// Exact posterior by explicit enumeration of all 2^N hidden paths; the
// independent check for the recursive implementations.
inline BruteForceResult brute_force_posterior(const ObservationRecord& rec, const HmmModel& m) {
    const std::size_t n = rec.outcomes.size();
    if (n == 0) throw std::invalid_argument("empty observations");
    if (n > 20) throw std::invalid_argument("brute force limited to 20 steps");
    BruteForceResult r;
    r.marginals.assign(n, {0.0, 0.0});
    double total = 0.0;
    const std::uint64_t paths = 1ull << n;
    for (std::uint64_t mask = 0; mask < paths; ++mask) {
        double prob = 1.0;
        int prev = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const int s = int((mask >> k) & 1u);
            const int o = rec.outcomes[k] ? 1 : 0;
            prob *= (k == 0 ? m.initial[s] : m.transition[prev][s]) * m.emission[s][o];
            prev = s;
        }
        total += prob;
        for (std::size_t k = 0; k < n; ++k) r.marginals[k][(mask >> k) & 1u] += prob;
    }
    if (!(total > 0.0)) throw std::runtime_error("zero-probability observation");
    for (auto& mk : r.marginals) {
        mk[0] /= total;
        mk[1] /= total;
    }
    r.log_likelihood = std::log(total);
    return r;
}

// Sample a hidden trajectory and its readout record from the model.
struct SimulatedRecord {
    ObservationRecord record;
    std::vector<AncillaState> truth;
};

inline SimulatedRecord simulate_record(const HmmLambda& lam, double t_m, std::size_t n_steps,
                                       std::uint64_t seed) {
    if (n_steps == 0) throw std::invalid_argument("empty observations");
    const HmmModel m = build_model(lam, t_m);
    Rng rng(seed);
    SimulatedRecord out;
    out.record.t_m = t_m;
    out.record.outcomes.resize(n_steps);
    out.truth.resize(n_steps);
    int s = rng.uniform() < m.initial[1] ? 1 : 0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        if (k > 0) s = rng.uniform() < m.transition[s][1] ? 1 : 0;
        out.truth[k] = s ? AncillaState::Excited : AncillaState::Ground;
        out.record.outcomes[k] = rng.uniform() < m.emission[s][1] ? 1 : 0;
    }
    return out;
}

// One outcome character per line; the storage format for observation records.
inline void save_observations(std::ostream& os, const ObservationRecord& rec) {
    os << "# t_m = " << rec.t_m << "\n";
    for (std::uint8_t o : rec.outcomes) os << (o ? '1' : '0') << "\n";
}

inline ObservationRecord load_observations(std::istream& is) {
    ObservationRecord rec;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos && line.find("t_m") != std::string::npos)
                rec.t_m = std::stod(line.substr(eq + 1));
            continue;
        }
        if (line[0] == '0') rec.outcomes.push_back(0);
        else if (line[0] == '1') rec.outcomes.push_back(1);
        else throw std::invalid_argument("observation file: expected 0 or 1, got '" + line + "'");
    }
    return rec;
}

// Run-length encoding of an outcome record: list of [value, count] pairs.
inline std::vector<std::pair<int, std::size_t>> rle_encode(const std::vector<std::uint8_t>& v) {
    std::vector<std::pair<int, std::size_t>> out;
    for (std::uint8_t o : v) {
        const int val = o ? 1 : 0;
        if (!out.empty() && out.back().first == val) ++out.back().second;
        else out.emplace_back(val, 1);
    }
    return out;
}

inline std::vector<std::uint8_t> rle_decode(const std::vector<std::pair<int, std::size_t>>& rle) {
    std::vector<std::uint8_t> out;
    for (const auto& [val, count] : rle)
        out.insert(out.end(), count, static_cast<std::uint8_t>(val ? 1 : 0));
    return out;
}

} // namespace cavfb
