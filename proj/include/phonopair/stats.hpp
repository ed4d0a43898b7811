// Correlation estimators, Cauchy-Schwarz bound machinery, fourfold
// coincidence tables and exponential decay fitting.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "detection.hpp"
#include "rng.hpp"

namespace phonopair {

struct stats_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct fit_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sparse trial archive: only trials with at least one click are stored;
/// `n_trials` is the total number of trials run.
struct RecordSet {
    uint64_t n_trials = 0;
    std::vector<ClickRecord> records;  // sorted by trial index, nonempty only
};

inline RecordSet read_records(std::istream& is, uint64_t n_trials) {
    RecordSet rs;
    rs.n_trials = n_trials;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        rs.records.push_back(parse_record(line));
    }
    std::sort(rs.records.begin(), rs.records.end(),
              [](const ClickRecord& a, const ClickRecord& b) { return a.trial < b.trial; });
    return rs;
}

// ---- g2 estimation ----------------------------------------------------------

struct G2Estimate {
    double value = 0;
    double sigma = 0;
    uint64_t delta_N = 0;
    std::optional<double> window;  // tau_f if windowed, seconds
    double coincidences = 0;
    uint64_t singles_a = 0, singles_b = 0;
    uint64_t trials = 0;
};

namespace detail {

struct TrialCounts {
    uint64_t trial = 0;
    uint32_t a = 0, b = 0;
};

inline std::vector<TrialCounts> extract_counts(const RecordSet& rs, int pulse,
                                               std::optional<double> window) {
    std::vector<TrialCounts> out;
    for (const auto& rec : rs.records) {
        TrialCounts tc{rec.trial, 0, 0};
        for (const auto& e : rec.events) {
            if (e.pulse != pulse) continue;
            if (window && e.t >= *window) continue;
            (e.det == Detector::A ? tc.a : tc.b)++;
        }
        if (tc.a || tc.b) out.push_back(tc);
    }
    return out;
}

}  // namespace detail

inline constexpr int kDefaultBootstrap = 1000;
inline constexpr uint64_t kBootstrapSeed = 0x626f6f7473ull;  // fixed: sigmas reproducible

/// Cross-trial normalized correlation,
/// g2(dN) = N_used * C(dN) / (S_A * S_B), with C(dN) the A(i) x B(i+dN)
/// coincidence product sum. Sigma from a trial-level Poisson bootstrap.
inline G2Estimate g2_cross_trials(const RecordSet& rs, int pulse, uint64_t delta_N,
                                  std::optional<double> window = std::nullopt,
                                  int n_boot = kDefaultBootstrap,
                                  uint64_t seed = kBootstrapSeed) {
    if (rs.n_trials < 2) throw stats_error("g2_cross_trials: need at least 2 trials");
    if (delta_N >= rs.n_trials) throw stats_error("g2_cross_trials: delta_N >= n_trials");
    const auto counts = detail::extract_counts(rs, pulse, window);
    const uint64_t N = rs.n_trials;
    const uint64_t n_used = N - delta_N;

    // Pair index i runs over [0, n_used): A at trial i, B at trial i + delta_N.
    // Collect contributing pairs from the sparse count list.
    struct PairEntry {
        uint32_t a = 0, b = 0;
    };
    std::vector<PairEntry> pairs;
    pairs.reserve(counts.size());
    {
        // two-pointer sweep: a-entries at trial t pair with b-entries at t+delta_N
        size_t jb = 0;
        for (size_t ja = 0; ja < counts.size(); ++ja) {
            const uint64_t i = counts[ja].trial;  // pair index from the A side
            if (i >= n_used) break;
            while (jb < counts.size() && counts[jb].trial < i + delta_N) ++jb;
            const uint32_t b =
                (jb < counts.size() && counts[jb].trial == i + delta_N) ? counts[jb].b : 0;
            if (counts[ja].a) pairs.push_back({counts[ja].a, b});
        }
        // b-entries whose paired a-count is zero were not picked up above
        size_t ja = 0;
        for (size_t jb2 = 0; jb2 < counts.size(); ++jb2) {
            if (counts[jb2].trial < delta_N || counts[jb2].b == 0) continue;
            const uint64_t i = counts[jb2].trial - delta_N;
            while (ja < counts.size() && counts[ja].trial < i) ++ja;
            const bool has_a = ja < counts.size() && counts[ja].trial == i && counts[ja].a > 0;
            if (!has_a) pairs.push_back({0, counts[jb2].b});
        }
    }

    G2Estimate est;
    est.delta_N = delta_N;
    est.window = window;
    est.trials = N;
    uint64_t sa = 0, sb = 0;
    double c = 0;
    for (const auto& p : pairs) {
        sa += p.a;
        sb += p.b;
        c += double(p.a) * double(p.b);
    }
    if (sa == 0 || sb == 0)
        throw stats_error("g2_cross_trials: zero singles on a detector, estimate undefined");
    est.singles_a = sa;
    est.singles_b = sb;
    est.coincidences = c;
    est.value = double(n_used) * c / (double(sa) * double(sb));

    if (n_boot > 0) {
        double sum = 0, sum2 = 0;
        int kept = 0;
        for (int r = 0; r < n_boot; ++r) {
            Rng rng(derive_seed(seed, r));
            double ca = 0, cb = 0, cc = 0;
            for (const auto& p : pairs) {
                const int w = rng.poisson(1.0);
                if (!w) continue;
                ca += w * double(p.a);
                cb += w * double(p.b);
                cc += w * double(p.a) * double(p.b);
            }
            if (ca <= 0 || cb <= 0) continue;
            const double v = double(n_used) * cc / (ca * cb);
            sum += v;
            sum2 += v * v;
            ++kept;
        }
        if (kept >= 2) {
            const double mean = sum / kept;
            est.sigma = std::sqrt(std::max(0.0, (sum2 / kept - mean * mean) * kept / (kept - 1)));
        }
        if (est.sigma == 0 && c >= 1) est.sigma = est.value;  // single-coincidence floor
    }
    return est;
}

// ---- Cauchy-Schwarz bound ---------------------------------------------------

/// RHS of the two-source Cauchy-Schwarz inequality at ratio parameter eta.
inline double cs_bound_at(double g2_r, double g2_b, double eta) {
    if (g2_r < 0 || g2_b < 0 || eta < 0) throw stats_error("cs_bound_at: negative input");
    const double s = std::sqrt(g2_r * g2_b);
    return (eta * eta * g2_r + g2_b + 4.0 * eta * s) / ((1.0 + eta) * (1.0 + eta));
}

/// Maximizing eta in closed form; for g2_r = g2_b the maximum sits at eta = 1
/// where the bound reduces to (3/2) sqrt(g2_r g2_b).
inline double cs_eta_star(double g2_r, double g2_b) {
    const double s = std::sqrt(g2_r * g2_b);
    const double denom = g2_r - 2.0 * s;
    if (std::abs(denom) < 1e-12 * std::max(g2_r, 1.0)) return 1.0;
    const double eta = (g2_b - 2.0 * s) / denom;
    return eta > 0 ? eta : 1.0;
}

struct CSBoundReport {
    G2Estimate g2, g2_r, g2_b;
    double eta = 1.0;
    double bound = 0;
    double bound_sigma = 0;  // first-order propagation from the reference sigmas
    bool violated = false;
    double sigmas = 0;             // (g2 - bound) / g2.sigma  (paper quoting convention)
    double sigmas_propagated = 0;  // bound uncertainty folded in
};

/// Violation significance; pass bound_sigma = 0 to quote against a fixed bound.
inline double violation_sigmas(const G2Estimate& g2, double bound, double bound_sigma = 0) {
    const double s = std::sqrt(g2.sigma * g2.sigma + bound_sigma * bound_sigma);
    if (s <= 0) throw stats_error("violation_sigmas: no sigma available");
    return (g2.value - bound) / s;
}

inline CSBoundReport cs_bound(const G2Estimate& g2, const G2Estimate& ref_r,
                              const G2Estimate& ref_b,
                              std::optional<double> eta = std::nullopt) {
    CSBoundReport rep;
    rep.g2 = g2;
    rep.g2_r = ref_r;
    rep.g2_b = ref_b;
    rep.eta = eta ? *eta : cs_eta_star(ref_r.value, ref_b.value);
    rep.bound = cs_bound_at(ref_r.value, ref_b.value, rep.eta);
    const double e = rep.eta, e2 = (1.0 + e) * (1.0 + e);
    const double s = std::sqrt(std::max(ref_r.value * ref_b.value, 1e-300));
    const double dr = (e * e + 2.0 * e * ref_b.value / s) / e2;
    const double db = (1.0 + 2.0 * e * ref_r.value / s) / e2;
    rep.bound_sigma = std::hypot(dr * ref_r.sigma, db * ref_b.sigma);
    rep.violated = g2.value > rep.bound;
    rep.sigmas = violation_sigmas(g2, rep.bound, 0.0);
    rep.sigmas_propagated = violation_sigmas(g2, rep.bound, rep.bound_sigma);
    return rep;
}

// ---- exponential fitting ----------------------------------------------------

enum class FitModel {
    single,     // y = offset + amplitude * exp(-x / decay)
    rise_fall,  // y = offset + amplitude * (1 - exp(-x / rise)) * exp(-x / decay)
};

struct FitResult {
    double amplitude = 0;
    double decay_constant = 0;  // s
    double rise_constant = 0;   // s, rise_fall model only
    double offset = 0;
    std::array<double, 16> covariance{};  // row-major over active parameters
    double residual_norm = 0;
    int iterations = 0;
    bool degenerate = false;  // amplitude ~ 0: decay constant unconstrained
};

namespace detail {

inline double fit_eval(FitModel model, const std::vector<double>& p, double x) {
    if (model == FitModel::single) return p[2] + p[0] * std::exp(-x / p[1]);
    return p[3] + p[0] * (1.0 - std::exp(-x / p[2])) * std::exp(-x / p[1]);
}

/// Log-linear tail regression for initial amplitude/decay guesses.
inline std::pair<double, double> tail_guess(const std::vector<double>& xs,
                                            const std::vector<double>& ys, double offset) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = xs.size() / 2; i < xs.size(); ++i) {
        const double v = ys[i] - offset;
        if (v <= 0) continue;
        const double ly = std::log(v);
        sx += xs[i];
        sy += ly;
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ly;
        ++n;
    }
    if (n < 2) return {0.0, 0.0};
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) return {0.0, 0.0};
    const double slope = (n * sxy - sx * sy) / denom;
    const double icpt = (sy - slope * sx) / n;
    if (slope >= 0) return {std::exp(icpt), 0.0};
    return {std::exp(icpt), -1.0 / slope};
}

}  // namespace detail

/// Levenberg-Marquardt least squares with central-difference jacobians.
/// Deterministic for identical inputs; initial guesses from log-linear tail
/// regression unless supplied.
inline FitResult fit_exponential(const std::vector<double>& xs, const std::vector<double>& ys,
                                 FitModel model = FitModel::single,
                                 std::optional<std::vector<double>> initial = std::nullopt,
                                 int max_iter = 300) {
    const int np = model == FitModel::single ? 3 : 4;
    if (xs.size() != ys.size()) throw fit_error("fit_exponential: x/y size mismatch");
    if (static_cast<int>(xs.size()) < np + 1)
        throw fit_error("fit_exponential: underdetermined fit, need >= " +
                        std::to_string(np + 1) + " points");

    const double xscale = *std::max_element(xs.begin(), xs.end());
    const double ymin = *std::min_element(ys.begin(), ys.end());
    const double ymax = *std::max_element(ys.begin(), ys.end());

    std::vector<double> p;
    if (initial) {
        p = *initial;
        if (static_cast<int>(p.size()) != np)
            throw fit_error("fit_exponential: initial guess has wrong length");
    } else {
        const double offset0 = ymin;
        auto [amp0, dec0] = detail::tail_guess(xs, ys, offset0);
        if (dec0 <= 0) dec0 = xscale > 0 ? xscale / 3.0 : 1.0;
        if (amp0 <= 0) amp0 = std::max(ymax - ymin, 1e-12);
        if (model == FitModel::single)
            p = {amp0, dec0, offset0};
        else
            p = {amp0, dec0, dec0 / 5.0, offset0};
    }

    const int n = static_cast<int>(xs.size());
    auto residuals = [&](const std::vector<double>& q, std::vector<double>& r) {
        double cost = 0;
        for (int i = 0; i < n; ++i) {
            r[i] = detail::fit_eval(model, q, xs[i]) - ys[i];
            cost += r[i] * r[i];
        }
        return cost;
    };

    std::vector<double> r(n), rt(n);
    double cost = residuals(p, r);
    double lm = 1e-3;
    int it = 0;

    std::vector<std::vector<double>> J(np, std::vector<double>(n));
    std::array<double, 16> cov{};
    for (; it < max_iter; ++it) {
        // central-difference jacobian
        for (int k = 0; k < np; ++k) {
            const double h = std::max(std::abs(p[k]) * 1e-7, 1e-14);
            std::vector<double> q = p;
            q[k] = p[k] + h;
            for (int i = 0; i < n; ++i) J[k][i] = detail::fit_eval(model, q, xs[i]);
            q[k] = p[k] - h;
            for (int i = 0; i < n; ++i)
                J[k][i] = (J[k][i] - detail::fit_eval(model, q, xs[i])) / (2.0 * h);
        }
        // normal equations with LM damping
        double A[16], g[4];
        for (int a = 0; a < np; ++a) {
            g[a] = 0;
            for (int i = 0; i < n; ++i) g[a] += J[a][i] * r[i];
            for (int b = 0; b < np; ++b) {
                double s = 0;
                for (int i = 0; i < n; ++i) s += J[a][i] * J[b][i];
                A[a * np + b] = s;
            }
        }
        bool improved = false;
        for (int attempt = 0; attempt < 12 && !improved; ++attempt) {
            double M[16];
            for (int a = 0; a < np; ++a)
                for (int b = 0; b < np; ++b)
                    M[a * np + b] = A[a * np + b] + (a == b ? lm * (A[a * np + a] + 1e-300) : 0.0);
            // solve M dp = g by gaussian elimination with partial pivoting
            double rhs[4];
            for (int a = 0; a < np; ++a) rhs[a] = g[a];
            bool singular = false;
            int piv[4] = {0, 1, 2, 3};
            for (int c = 0; c < np && !singular; ++c) {
                int best = c;
                for (int a2 = c + 1; a2 < np; ++a2)
                    if (std::abs(M[piv[a2] * np + c]) > std::abs(M[piv[best] * np + c])) best = a2;
                std::swap(piv[c], piv[best]);
                const double d = M[piv[c] * np + c];
                if (std::abs(d) < 1e-300) {
                    singular = true;
                    break;
                }
                for (int a2 = c + 1; a2 < np; ++a2) {
                    const double f = M[piv[a2] * np + c] / d;
                    for (int b2 = c; b2 < np; ++b2) M[piv[a2] * np + b2] -= f * M[piv[c] * np + b2];
                    rhs[piv[a2]] -= f * rhs[piv[c]];
                }
            }
            if (singular) {
                lm *= 10;
                continue;
            }
            double dp[4];
            for (int c = np - 1; c >= 0; --c) {
                double s = rhs[piv[c]];
                for (int b2 = c + 1; b2 < np; ++b2) s -= M[piv[c] * np + b2] * dp[b2];
                dp[c] = s / M[piv[c] * np + c];
            }
            std::vector<double> q = p;
            for (int a = 0; a < np; ++a) q[a] = p[a] - dp[a];
            if (q[1] <= 0) q[1] = p[1] / 2;  // keep time constants positive
            if (np == 4 && q[2] <= 0) q[2] = p[2] / 2;
            const double c2 = residuals(q, rt);
            if (c2 < cost) {
                const double rel = std::abs(cost - c2) / std::max(cost, 1e-300);
                p = q;
                std::swap(r, rt);
                cost = c2;
                lm = std::max(lm * 0.3, 1e-14);
                improved = true;
                if (rel < 1e-15) it = max_iter;  // converged
            } else {
                lm *= 10;
            }
        }
        if (!improved) break;  // converged or stuck at a minimum
    }

    // covariance = sigma^2 (J'J)^{-1} via the same elimination
    {
        double A[16];
        for (int k = 0; k < np; ++k) {
            const double h = std::max(std::abs(p[k]) * 1e-7, 1e-14);
            std::vector<double> q = p;
            q[k] = p[k] + h;
            for (int i = 0; i < n; ++i) J[k][i] = detail::fit_eval(model, q, xs[i]);
            q[k] = p[k] - h;
            for (int i = 0; i < n; ++i)
                J[k][i] = (J[k][i] - detail::fit_eval(model, q, xs[i])) / (2.0 * h);
        }
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < np; ++b) {
                double s = 0;
                for (int i = 0; i < n; ++i) s += J[a][i] * J[b][i];
                A[a * np + b] = s;
            }
        const double dof = std::max(n - np, 1);
        const double s2 = cost / dof;
        // invert by solving against unit vectors
        for (int col = 0; col < np; ++col) {
            double M[16], rhs[4] = {0, 0, 0, 0};
            std::copy(A, A + np * np, M);
            rhs[col] = 1.0;
            int piv[4] = {0, 1, 2, 3};
            bool singular = false;
            for (int c = 0; c < np && !singular; ++c) {
                int best = c;
                for (int a2 = c + 1; a2 < np; ++a2)
                    if (std::abs(M[piv[a2] * np + c]) > std::abs(M[piv[best] * np + c])) best = a2;
                std::swap(piv[c], piv[best]);
                const double d = M[piv[c] * np + c];
                if (std::abs(d) < 1e-300) {
                    singular = true;
                    break;
                }
                for (int a2 = c + 1; a2 < np; ++a2) {
                    const double f = M[piv[a2] * np + c] / d;
                    for (int b2 = c; b2 < np; ++b2) M[piv[a2] * np + b2] -= f * M[piv[c] * np + b2];
                    rhs[piv[a2]] -= f * rhs[piv[c]];
                }
            }
            for (int c = np - 1; c >= 0 && !singular; --c) {
                double s = rhs[piv[c]];
                for (int b2 = c + 1; b2 < np; ++b2) s -= M[piv[c] * np + b2] * cov[b2 * np + col];
                cov[c * np + col] = s / M[piv[c] * np + c];
            }
        }
        for (auto& v : cov) v *= s2;
    }

    FitResult out;
    out.amplitude = p[0];
    out.decay_constant = p[1];
    if (np == 4) {
        out.rise_constant = p[2];
        out.offset = p[3];
    } else {
        out.offset = p[2];
    }
    out.covariance = cov;
    out.residual_norm = std::sqrt(cost);
    out.iterations = it;
    const double yspread = std::max(ymax - ymin, std::abs(ymax));
    out.degenerate = std::abs(out.amplitude) < 1e-6 * std::max(yspread, 1e-300) ||
                     (yspread > 0 && std::abs(out.amplitude) < 1e-9);
    return out;
}

// ---- windowed / delay-sweep decay analyses ----------------------------------

struct WindowedDecay {
    std::vector<G2Estimate> points;
    FitResult fit;  // value(tau_f) = offset + amplitude exp(-tau_f / t_d1)
};

inline WindowedDecay g2_windowed_decay(const RecordSet& rs, const std::vector<double>& windows,
                                       int pulse = 2, int n_boot = kDefaultBootstrap,
                                       uint64_t seed = kBootstrapSeed) {
    if (windows.size() < 3) throw fit_error("g2_windowed_decay: need >= 3 windows");
    if (!std::is_sorted(windows.begin(), windows.end()))
        throw stats_error("g2_windowed_decay: windows must be increasing");
    WindowedDecay out;
    std::vector<double> xs, ys;
    for (double w : windows) {
        out.points.push_back(g2_cross_trials(rs, pulse, 0, w, n_boot, seed));
        xs.push_back(w);
        ys.push_back(out.points.back().value);
    }
    out.fit = fit_exponential(xs, ys, FitModel::single);
    return out;
}

/// Fits g2(delta_T) = floor + amplitude exp(-delta_T / t_d2). The thermal
/// floor defaults to 2 (fixed), since late-delay samples are too small to
/// constrain a free floor.
inline FitResult g2_vs_delay(const std::vector<double>& delta_Ts,
                             const std::vector<double>& g2_values,
                             std::optional<double> thermal_floor = 2.0) {
    if (delta_Ts.size() != g2_values.size()) throw fit_error("g2_vs_delay: size mismatch");
    if (delta_Ts.size() < 3) throw fit_error("g2_vs_delay: need >= 3 delays");
    if (!thermal_floor) {
        std::vector<double> xs(delta_Ts), ys(g2_values);
        return fit_exponential(xs, ys, FitModel::single);
    }
    // fixed floor: fit amplitude/decay on the shifted data, pin the offset
    std::vector<double> ys;
    ys.reserve(g2_values.size());
    for (double v : g2_values) ys.push_back(v - *thermal_floor);
    auto [amp0, dec0] = detail::tail_guess(delta_Ts, ys, 0.0);
    if (dec0 <= 0) dec0 = delta_Ts.back() / 3.0;
    if (amp0 <= 0) amp0 = std::max(*std::max_element(ys.begin(), ys.end()), 1e-12);
    FitResult fit = fit_exponential(delta_Ts, ys, FitModel::single,
                                    std::vector<double>{amp0, dec0, 0.0});
    fit.offset += *thermal_floor;
    return fit;
}

// ---- fourfold coincidences ---------------------------------------------------

/// 2x2 classification of trials by two-photon click events (A and B coincident
/// within the pulse) in pulses 1 and 2.
struct FourfoldTable {
    uint64_t n_22 = 0;  // two-photon event in both pulses
    uint64_t n_20 = 0;  // pulse 1 only
    uint64_t n_02 = 0;  // pulse 2 only
    uint64_t n_00 = 0;  // neither
    uint64_t trials = 0;
};

inline FourfoldTable fourfold_coincidences(const RecordSet& rs) {
    FourfoldTable t;
    t.trials = rs.n_trials;
    uint64_t classified = 0;
    for (const auto& rec : rs.records) {
        bool a1 = false, b1 = false, a2 = false, b2 = false;
        for (const auto& e : rec.events) {
            bool& flag = e.pulse == 1 ? (e.det == Detector::A ? a1 : b1)
                                      : (e.det == Detector::A ? a2 : b2);
            flag = true;
        }
        const bool two1 = a1 && b1, two2 = a2 && b2;
        if (two1 && two2)
            ++t.n_22;
        else if (two1)
            ++t.n_20;
        else if (two2)
            ++t.n_02;
        else
            ++t.n_00;
        ++classified;
    }
    t.n_00 += rs.n_trials - classified;  // empty trials are (0,0) by definition
    return t;
}

// ---- chi-squared goodness of fit --------------------------------------------

namespace detail {

inline double gamma_q(double a, double x) {
    // regularized upper incomplete gamma Q(a, x)
    if (x < 0 || a <= 0) throw stats_error("gamma_q: bad arguments");
    if (x == 0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {  // series for P, return 1 - P
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // continued fraction for Q
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

}  // namespace detail

/// Chi-squared test of an observed count histogram against Poisson(mean).
/// Bins with expected counts < 5 are merged into the tail. Returns the p-value.
inline double chi2_poisson_pvalue(const std::vector<uint64_t>& histogram, double mean,
                                  uint64_t n_windows) {
    if (n_windows == 0) throw stats_error("chi2_poisson_pvalue: no windows");
    std::vector<double> expected;
    double pk = std::exp(-mean), cum = 0;
    for (size_t k = 0; k < histogram.size(); ++k) {
        expected.push_back(pk * double(n_windows));
        cum += pk;
        pk *= mean / double(k + 1);
    }
    expected.push_back(std::max(0.0, (1.0 - cum)) * double(n_windows));
    std::vector<double> obs(histogram.begin(), histogram.end());
    obs.push_back(0);

    // merge low-expectation tail bins
    std::vector<double> eb, ob;
    double ea = 0, oa = 0;
    for (size_t k = 0; k < expected.size(); ++k) {
        ea += expected[k];
        oa += obs[k];
        if (ea >= 5.0) {
            eb.push_back(ea);
            ob.push_back(oa);
            ea = oa = 0;
        }
    }
    if (ea > 0 && !eb.empty()) {
        eb.back() += ea;
        ob.back() += oa;
    }
    if (eb.size() < 2) throw stats_error("chi2_poisson_pvalue: too few usable bins");
    double chi2 = 0;
    for (size_t k = 0; k < eb.size(); ++k) {
        const double d = ob[k] - eb[k];
        chi2 += d * d / eb[k];
    }
    const double dof = double(eb.size() - 1);
    return detail::gamma_q(dof / 2.0, chi2 / 2.0);
}

}  // namespace phonopair
