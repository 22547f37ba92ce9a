#pragma once

#include <bsgen/error.hpp>
#include <bsgen/feed.hpp>
#include <bsgen/front.hpp>
#include <bsgen/popsim.hpp>
#include <bsgen/rng.hpp>
#include <bsgen/scaling.hpp>
#include <bsgen/stats.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace bsgen {

using SnapshotRow = SnapshotRecorder::Row;
using TauEntry = TauTracker::Entry;

/// Closed intervals of scaled time t = (model time) / a_N.
using TimeSet = std::vector<std::pair<double, double>>;

inline TimeSet default_front_set() { return {{0.2, 0.9}, {1.1, 3.9}}; }

inline bool in_set(const TimeSet& set, double t) {
    for (const auto& [a, b] : set)
        if (t >= a && t <= b)
            return true;
    return false;
}

/// Per-snapshot summary: mean type, highest occupied type, population size.
struct SnapshotSummary {
    double t = 0;
    double mean = 0;
    std::int32_t jmax = 0;
    std::int64_t total = 0;

    double Q() const noexcept { return static_cast<double>(jmax) - mean; }
};

/// Groups rows by time. Rows of one snapshot must be contiguous, as written by
/// SnapshotRecorder.
inline std::vector<SnapshotSummary> summarize_snapshots(const std::vector<SnapshotRow>& rows) {
    std::vector<SnapshotSummary> out;
    double weighted = 0;
    auto close = [&] {
        if (!out.empty() && out.back().total > 0)
            out.back().mean = weighted / static_cast<double>(out.back().total);
    };
    for (const auto& r : rows) {
        if (out.empty() || r.t != out.back().t) {
            if (!out.empty() && r.t < out.back().t)
                throw ArgumentError("snapshot rows are not in time order");
            close();
            out.push_back({r.t, 0.0, r.j, 0});
            weighted = 0;
        }
        auto& s = out.back();
        if (r.count > 0)
            s.jmax = std::max(s.jmax, r.j);
        s.total += r.count;
        weighted += static_cast<double>(r.j) * static_cast<double>(r.count);
    }
    close();
    return out;
}

// ---------------------------------------------------------------------------
// Q front

struct QPoint {
    double t = 0;        ///< scaled time
    double scaled_Q = 0; ///< Q(a_N t) / k_N
    double q = 0;
};

struct QProfileCheck {
    double sup_deviation = std::numeric_limits<double>::quiet_NaN();
    double t_at_sup = std::numeric_limits<double>::quiet_NaN();
    std::vector<QPoint> points;
    std::string notice;
};

/// sup over snapshot times in S of |Q(a_N t)/k_N - q(t)|, Q = max occupied
/// type minus the mean type.
inline QProfileCheck q_profile_check(const std::vector<SnapshotRow>& rows, const ScaleConstants& sc,
                                     const QProfile& profile, const TimeSet& set = default_front_set()) {
    QProfileCheck out;
    double sup = -1.0;
    for (const auto& snap : summarize_snapshots(rows)) {
        const double t = snap.t / sc.a_N;
        if (!in_set(set, t))
            continue;
        if (t > profile.t_max())
            throw ArgumentError("q profile ends at " + std::to_string(profile.t_max()) + " before snapshot time " +
                                std::to_string(t));
        QPoint p{t, snap.Q() / sc.k_N, profile(t)};
        const double d = std::abs(p.scaled_Q - p.q);
        if (d > sup) {
            sup = d;
            out.t_at_sup = t;
        }
        out.points.push_back(p);
    }
    if (out.points.empty())
        out.notice = "no snapshot falls in the comparison set";
    else
        out.sup_deviation = sup;
    return out;
}

// ---------------------------------------------------------------------------
// Front constants and tau spacing

struct FrontStats {
    std::vector<std::pair<double, double>> Q; ///< (model time, Q) per snapshot
    std::vector<FrontConstants> constants;
};

inline std::vector<FrontConstants> front_constants(const std::vector<TauEntry>& taus, const ScaleConstants& sc, double s,
                                                   double b) {
    std::vector<FrontConstants> out;
    out.reserve(taus.size());
    for (const auto& e : taus)
        out.push_back(front_constants_at(e.j, e.tau, e.mean_at_tau, sc, s, b));
    return out;
}

inline FrontStats front_stats(const std::vector<SnapshotRow>& rows, const std::vector<TauEntry>& taus,
                              const ScaleConstants& sc, double s, double b) {
    FrontStats fs;
    for (const auto& snap : summarize_snapshots(rows))
        fs.Q.emplace_back(snap.t, snap.Q());
    fs.constants = front_constants(taus, sc, s, b);
    return fs;
}

struct TauSpacing {
    double lo = 0; ///< a_N / (3 k_N)
    double hi = 0; ///< 2 a_N / k_N
    std::vector<std::pair<std::int32_t, double>> gaps; ///< (j, tau_{j+1} - tau_j)
    double fraction_in_band = std::numeric_limits<double>::quiet_NaN();
};

/// Gaps between consecutive recorded tau_j with tau_j >= t_min.
inline TauSpacing tau_spacing(std::vector<TauEntry> taus, const ScaleConstants& sc, double t_min = 0.0) {
    std::sort(taus.begin(), taus.end(), [](const TauEntry& a, const TauEntry& b) { return a.j < b.j; });
    TauSpacing out;
    out.lo = sc.a_N / (3.0 * sc.k_N);
    out.hi = 2.0 * sc.a_N / sc.k_N;
    std::size_t inside = 0;
    for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
        if (taus[i + 1].j != taus[i].j + 1 || taus[i].tau < t_min)
            continue;
        const double gap = taus[i + 1].tau - taus[i].tau;
        out.gaps.emplace_back(taus[i].j, gap);
        inside += gap >= out.lo && gap <= out.hi;
    }
    if (!out.gaps.empty())
        out.fraction_in_band = static_cast<double>(inside) / static_cast<double>(out.gaps.size());
    return out;
}

// ---------------------------------------------------------------------------
// Growth of X_{j-1} and X_j after tau_j

struct LogFit {
    std::size_t points = 0;
    double slope = 0, intercept = 0;
    double predicted_slope = 0, predicted_intercept = 0;
    double slope_residual = 0, intercept_residual = 0; ///< fitted minus predicted
    double rms = 0; ///< rms of log X minus the predicted line
};

struct GrowthCheck {
    std::int32_t j = 0;
    bool skipped = false;
    std::string notice;
    double tau = 0, tau_next = 0, q = 0;
    LogFit prev; ///< log X_{j-1} vs log(s/mu) + s(q-1)(t - tau_j)
    LogFit cur;  ///< log X_j vs s q (t - tau_j)
};

namespace detail {

inline bool fit_log(const std::vector<double>& t, const std::vector<double>& x, double slope, double intercept,
                    LogFit& out) {
    std::vector<double> tt, lx;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (x[i] > 0.0) {
            tt.push_back(t[i]);
            lx.push_back(std::log(x[i]));
        }
    }
    out.points = tt.size();
    out.predicted_slope = slope;
    out.predicted_intercept = intercept;
    if (tt.size() < 3)
        return false;
    const auto f = stats::linear_fit(tt, lx);
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.slope_residual = f.slope - slope;
    out.intercept_residual = f.intercept - intercept;
    double ss = 0;
    for (std::size_t i = 0; i < tt.size(); ++i) {
        const double r = lx[i] - (intercept + slope * tt[i]);
        ss += r * r;
    }
    out.rms = std::sqrt(ss / static_cast<double>(tt.size()));
    return true;
}

} // namespace detail

/// Fits on explicit series; `dt` are times since tau_j.
inline GrowthCheck growth_fit(std::int32_t j, const std::vector<double>& dt, const std::vector<double>& x_prev,
                              const std::vector<double>& x_cur, double q, double s, double mu) {
    if (dt.size() != x_prev.size() || dt.size() != x_cur.size())
        throw ArgumentError("growth_fit: series lengths differ");
    GrowthCheck g;
    g.j = j;
    g.q = q;
    const bool a = detail::fit_log(dt, x_prev, s * (q - 1.0), std::log(s / mu), g.prev);
    const bool b = detail::fit_log(dt, x_cur, s * q, 0.0, g.cur);
    if (!a || !b) {
        g.skipped = true;
        g.notice = "type " + std::to_string(j) + ": fewer than 3 occupied snapshots between tau_j and tau_{j+1}";
    }
    return g;
}

/// Snapshot version: uses snapshot times strictly inside (tau_j, tau_{j+1}).
inline GrowthCheck growth_check(const std::vector<SnapshotRow>& rows, const std::vector<TauEntry>& taus, std::int32_t j,
                                const ScaleConstants& sc, double s, double mu, double b) {
    const TauEntry* e0 = nullptr;
    const TauEntry* e1 = nullptr;
    for (const auto& e : taus) {
        if (e.j == j)
            e0 = &e;
        if (e.j == j + 1)
            e1 = &e;
    }
    if (!e0 || !e1) {
        GrowthCheck g;
        g.j = j;
        g.skipped = true;
        g.notice = "type " + std::to_string(j) + ": " + (e0 ? "tau_{j+1}" : "tau_j") + " not recorded";
        return g;
    }
    const auto fc = front_constants_at(j, e0->tau, e0->mean_at_tau, sc, s, b);
    std::vector<double> dt, xp, xc;
    for (std::size_t i = 0; i < rows.size();) {
        const double t = rows[i].t;
        double a = 0, c = 0;
        for (; i < rows.size() && rows[i].t == t; ++i) {
            if (rows[i].j == j - 1)
                a = static_cast<double>(rows[i].count);
            if (rows[i].j == j)
                c = static_cast<double>(rows[i].count);
        }
        if (t > e0->tau && t < e1->tau) {
            dt.push_back(t - e0->tau);
            xp.push_back(a);
            xc.push_back(c);
        }
    }
    auto g = growth_fit(j, dt, xp, xc, fc.q, s, mu);
    g.tau = e0->tau;
    g.tau_next = e1->tau;
    return g;
}

// ---------------------------------------------------------------------------
// Martingale Z_j

struct MartingalePoint {
    double t = 0;
    double z = 0;
};

struct MartingaleValue {
    std::int32_t j = 0;
    double z = 0;         ///< Z_j(t1)
    double integrand = 0; ///< int e^{-2 int G*} (mu X_{j-1} + (B + D) X_j) over [t0, t1]
    double x0 = 0, x1 = 0;
    std::vector<MartingalePoint> path;
};

namespace detail {

// (1 - e^{-y}) / y, equal to 1 at y = 0.
inline double one_minus_exp_ratio(double y) { return y == 0.0 ? 1.0 : -std::expm1(-y) / y; }

inline bool same_state(const TypeStep& a, const TypeStep& b) {
    return a.x_prev == b.x_prev && a.x == b.x && a.type_sum == b.type_sum && a.w == b.w;
}

} // namespace detail

/// Z_j on [t0, t1] from a piecewise-constant track whose first step is at t0.
/// The integrals are exact sums over the intervals between state changes;
/// repeated rows with an unchanged state are merged first, so inserting such
/// rows leaves the result bit-identical.
inline MartingaleValue martingale_value(const std::vector<TypeStep>& steps, double t1, std::int32_t j, std::int64_t N,
                                        double s, double mu, bool keep_path = false) {
    if (steps.empty())
        throw ArgumentError("martingale: empty track");
    const double t0 = steps.front().t;
    if (t1 < t0)
        throw ArgumentError("martingale: window ends before it starts");
    std::vector<TypeStep> path;
    for (const auto& st : steps) {
        if (st.t > t1)
            break;
        if (path.empty() || !detail::same_state(path.back(), st))
            path.push_back(st);
    }
    const double Nd = static_cast<double>(N);
    MartingaleValue out;
    out.j = j;
    out.x0 = static_cast<double>(path.front().x);
    double E = 0;   // int_{t0}^{t} G*
    double imm = 0; // int mu X_{j-1} e^{-E}
    double var = 0;
    auto z_now = [&](double x) { return std::exp(-E) * x - imm - out.x0; };
    if (keep_path)
        out.path.push_back({t0, 0.0});
    for (std::size_t i = 0; i < path.size(); ++i) {
        const auto& st = path[i];
        const double b = i + 1 < path.size() ? path[i + 1].t : t1;
        const double h = b - st.t;
        const double x = static_cast<double>(st.x);
        const double W = st.w > 0 ? st.w : Nd;
        const double M = static_cast<double>(st.type_sum) / Nd;
        const double F = std::max(0.0, 1.0 + s * (static_cast<double>(j) - M)) / W;
        const double B = (Nd - x) * F;
        const double D = 1.0 + mu - x * F;
        const double g = B - D;
        const double e1 = std::exp(-E);
        imm += mu * static_cast<double>(st.x_prev) * e1 * h * detail::one_minus_exp_ratio(g * h);
        var += (mu * static_cast<double>(st.x_prev) + (B + D) * x) * e1 * e1 * h * detail::one_minus_exp_ratio(2.0 * g * h);
        E += g * h;
        if (keep_path && i + 1 < path.size())
            out.path.push_back({b, z_now(static_cast<double>(path[i + 1].x))});
    }
    out.x1 = static_cast<double>(path.back().x);
    out.z = z_now(out.x1);
    out.integrand = var;
    if (keep_path && out.path.back().t != t1)
        out.path.push_back({t1, out.z});
    return out;
}

enum class TypeRule { fixed, modal, front };

struct MartingaleOptions {
    double t0 = 0, t1 = 0; ///< absolute model times
    TypeRule rule = TypeRule::modal;
    std::int32_t j = 0;    ///< used by TypeRule::fixed
    bool keep_path = false;
};

/// One replicate: runs to t0, picks j from the state there, tracks it to t1.
inline MartingaleValue martingale_replicate(const ModelParams& p, const MartingaleOptions& opt, RandomStream& rng) {
    if (!(opt.t0 >= 0.0) || opt.t1 < opt.t0)
        throw ArgumentError("martingale window must satisfy 0 <= t0 <= t1");
    validate_model(p);
    PopulationState st = init_population(p);
    run_until(st, p, opt.t0, rng);
    std::int32_t j = opt.j;
    if (opt.rule == TypeRule::front) {
        j = st.jmax();
    } else if (opt.rule == TypeRule::modal) {
        j = st.jmin();
        for (std::int32_t k = st.jmin(); k <= st.jmax(); ++k)
            if (st.count(k) > st.count(j))
                j = k;
    }
    TypeTrackRecorder rec(j);
    rec.start(st);
    run_until(st, p, opt.t1, rng, rec);
    return martingale_value(rec.steps(), opt.t1, j, p.N, p.s, p.mu, opt.keep_path);
}

struct MartingaleReport {
    std::size_t reps = 0;
    double mean = 0, se = 0;
    double z_score = 0;       ///< mean / se
    double empirical_var = 0;
    double integrand_mean = 0, integrand_se = 0;
    double ratio = 0;         ///< empirical_var / integrand_mean
    double ratio_se = 0;      ///< delta method, ignoring the integrand's own noise
};

inline MartingaleReport martingale_check(const std::vector<MartingaleValue>& values) {
    if (values.size() < 2)
        throw ArgumentError("martingale check needs at least two replicates");
    std::vector<double> z, v;
    for (const auto& m : values) {
        z.push_back(m.z);
        v.push_back(m.integrand);
    }
    const auto mz = stats::mean_se(z);
    const auto mv = stats::mean_se(v);
    MartingaleReport r;
    r.reps = values.size();
    r.mean = mz.mean;
    r.se = mz.se;
    r.z_score = mz.se > 0 ? mz.mean / mz.se : 0.0;
    r.empirical_var = mz.sd * mz.sd;
    r.integrand_mean = mv.mean;
    r.integrand_se = mv.se;
    r.ratio = mv.mean > 0 ? r.empirical_var / mv.mean : std::numeric_limits<double>::quiet_NaN();
    double m4 = 0;
    for (double x : z)
        m4 += std::pow(x - mz.mean, 4);
    m4 /= static_cast<double>(z.size());
    const double var_of_var = (m4 - r.empirical_var * r.empirical_var) / static_cast<double>(z.size());
    r.ratio_se = mv.mean > 0 ? std::sqrt(std::max(0.0, var_of_var)) / mv.mean : 0.0;
    return r;
}

/// Replicates r = 0..reps-1 on streams derived from `seed`.
inline MartingaleReport martingale_experiment(const ModelParams& p, const MartingaleOptions& opt, std::size_t reps,
                                              std::uint64_t seed) {
    std::vector<MartingaleValue> vals;
    vals.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        auto rng = RandomStream::for_replicate(seed, r);
        vals.push_back(martingale_replicate(p, opt, rng));
    }
    return martingale_check(vals);
}

} // namespace bsgen
