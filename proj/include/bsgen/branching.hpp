#pragma once

#include <bsgen/error.hpp>
#include <bsgen/feed.hpp>
#include <bsgen/rng.hpp>
#include <bsgen/stats.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace bsgen {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// P(Z(t) > 0) for a birth-death process started from one individual.
/// t may be infinite.
inline double survival_prob(double lambda, double nu, double t) {
    if (!(lambda > nu) || !(nu >= 0.0))
        throw ArgumentError("survival_prob needs lambda > nu >= 0");
    if (!(t >= 0.0))
        throw ArgumentError("survival_prob needs t >= 0");
    const double r = lambda - nu;
    if (std::isinf(t))
        return r / lambda;
    return r / (lambda - nu * std::exp(-r * t));
}

/// Immigration intensity a e^{g t} on [0, t_cut], zero afterwards.
struct ImmigrationProfile {
    double amplitude = 0; ///< a = c s
    double growth = 0;    ///< g
    double t_cut = kInf;

    double rate(double t) const { return t >= 0.0 && t <= t_cut ? amplitude * std::exp(growth * t) : 0.0; }

    /// Integral of the rate over [t0, t1].
    double integral(double t0, double t1) const {
        t0 = std::max(t0, 0.0);
        t1 = std::min(t1, t_cut);
        if (!(t1 > t0) || amplitude == 0.0)
            return 0.0;
        const double d = t1 - t0;
        if (growth == 0.0)
            return amplitude * d;
        return amplitude * std::exp(growth * t0) * std::expm1(growth * d) / growth;
    }

    /// First arrival after t given a unit exponential e, by inverting the
    /// integral in closed form. Infinite if none falls before t_cut.
    double next_arrival(double t, double e) const {
        if (amplitude <= 0.0 || t >= t_cut)
            return kInf;
        t = std::max(t, 0.0);
        double out;
        if (growth == 0.0) {
            out = t + e / amplitude;
        } else {
            const double arg = growth * e / (amplitude * std::exp(growth * t));
            if (arg <= -1.0)
                return kInf;
            out = t + std::log1p(arg) / growth;
        }
        return out <= t_cut ? out : kInf;
    }
};

struct BDParams {
    double lambda = 2.0;
    double nu = 1.0;
    ImmigrationProfile immigration;
    std::int64_t z0 = 1;
    std::int64_t cap = 100'000'000;
};

inline void validate_bd(const BDParams& p) {
    if (!(p.lambda >= 0.0) || !(p.nu >= 0.0) || !std::isfinite(p.lambda) || !std::isfinite(p.nu))
        throw ConfigError("birth and death rates must be finite and non-negative");
    if (p.immigration.amplitude < 0.0)
        throw ConfigError("immigration amplitude must be non-negative");
    if (p.z0 < 0)
        throw ConfigError("initial size must be non-negative");
    if (p.cap < 1)
        throw ConfigError("explosion cap must be positive");
}

struct BdOptions {
    std::vector<double> checkpoints;      ///< increasing times at which Z is recorded
    bool record_path = false;              ///< keep (t, Z) after every event
    std::int64_t stop_above = 0;           ///< stop once Z reaches this (0: never)
};

struct BdPath {
    std::vector<std::int64_t> at_checkpoints; ///< Z at each checkpoint reached
    std::vector<std::pair<double, std::int64_t>> path;
    std::int64_t final_size = 0;
    double t_stop = 0;         ///< t_end, or the time stop_above triggered
    bool stopped_above = false;
    std::uint64_t events = 0;
    std::uint64_t immigrants = 0;
};

/// Exact event-driven simulation on [0, t_end]. Individual events compete
/// with immigrant arrivals drawn by inversion of the intensity integral.
/// Throws CapabilityError if the population exceeds params.cap.
inline BdPath simulate_bd(const BDParams& p, double t_end, RandomStream& rng, const BdOptions& opt = {}) {
    validate_bd(p);
    if (!(t_end >= 0.0))
        throw ArgumentError("simulate_bd needs t_end >= 0");
    BdPath out;
    std::int64_t z = p.z0;
    double t = 0.0;
    std::size_t next_cp = 0;
    const double per = p.lambda + p.nu;
    const double p_birth = per > 0.0 ? p.lambda / per : 0.0;
    auto record_until = [&](double upto) {
        while (next_cp < opt.checkpoints.size() && opt.checkpoints[next_cp] < upto) {
            out.at_checkpoints.push_back(z);
            ++next_cp;
        }
    };
    if (opt.record_path)
        out.path.emplace_back(0.0, z);
    while (true) {
        if (opt.stop_above > 0 && z >= opt.stop_above) {
            out.stopped_above = true;
            break;
        }
        const double total = static_cast<double>(z) * per;
        const double t_ind = total > 0.0 ? t + rng.exponential(total) : kInf;
        const bool imm_open = p.immigration.amplitude > 0.0 && t < p.immigration.t_cut;
        const double t_imm = imm_open ? p.immigration.next_arrival(t, rng.exponential(1.0)) : kInf;
        const double t_next = std::min(t_ind, t_imm);
        if (t_next > t_end) {
            record_until(kInf);
            t = t_end;
            break;
        }
        record_until(t_next);
        t = t_next;
        if (t_imm < t_ind) {
            ++z;
            ++out.immigrants;
        } else if (rng.uniform() < p_birth) {
            ++z;
        } else {
            --z;
        }
        ++out.events;
        if (z > p.cap)
            throw CapabilityError("branching population exceeded the cap of " + std::to_string(p.cap));
        if (opt.record_path)
            out.path.emplace_back(t, z);
    }
    if (out.stopped_above)
        out.at_checkpoints.resize(opt.checkpoints.size(), -1);
    out.final_size = z;
    out.t_stop = out.stopped_above ? t : t_end;
    return out;
}

/// Size at time t of a birth-death process started from one individual,
/// drawn from its exact law: zero with probability alpha, otherwise
/// geometric on {1, 2, ...} with P(Z > n | Z > 0) = beta^n.
inline std::int64_t sample_bd_size(double lambda, double nu, double t, RandomStream& rng) {
    if (!(lambda >= 0.0) || !(nu >= 0.0) || !(t >= 0.0))
        throw ArgumentError("sample_bd_size needs non-negative rates and time");
    if (t == 0.0)
        return 1;
    const double r = lambda - nu;
    double alpha, one_minus_beta;
    if (std::abs(r) * t < 1e-9) {
        alpha = nu * t / (1.0 + nu * t);
        one_minus_beta = 1.0 / (1.0 + lambda * t);
    } else {
        const double em1 = std::expm1(r * t);
        const double den = lambda * em1 + r; // lambda e^{rt} - nu
        alpha = nu * em1 / den;
        one_minus_beta = r / den;
    }
    if (rng.uniform() < alpha)
        return 0;
    if (one_minus_beta >= 1.0)
        return 1;
    const double g = std::floor(std::log(rng.uniform_pos()) / std::log1p(-one_minus_beta));
    return 1 + static_cast<std::int64_t>(std::min(g, 9.0e18));
}

// --------------------------------------------------------------------------
// Survival and the W limit

struct SurvivalRow {
    double lambda = 0;
    double nu = 0;
    double t = 0;
    std::size_t reps = 0;
    double freq = 0;
    double se = 0;
    double exact = 0;
    double z = 0; ///< (freq - exact) / binomial sd at exact
};

/// Monte Carlo P(Z(t) > 0). A run that reaches a size whose extinction chance
/// (nu/lambda)^Z is below 1e-12 is counted as surviving.
inline SurvivalRow survival_frequency(double lambda, double nu, double t, std::size_t reps, std::uint64_t seed) {
    SurvivalRow row{lambda, nu, t, reps};
    row.exact = survival_prob(lambda, nu, t);
    BDParams p;
    p.lambda = lambda;
    p.nu = nu;
    BdOptions opt;
    opt.stop_above = nu > 0.0 ? static_cast<std::int64_t>(std::ceil(std::log(1e-12) / std::log(nu / lambda))) : 1;
    std::size_t alive = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        auto rng = RandomStream::for_replicate(seed, r);
        const auto path = simulate_bd(p, t, rng, opt);
        alive += path.stopped_above || path.final_size > 0;
    }
    const double n = static_cast<double>(reps);
    row.freq = static_cast<double>(alive) / n;
    row.se = std::sqrt(row.freq * (1.0 - row.freq) / n);
    row.z = (row.freq - row.exact) / std::sqrt(row.exact * (1.0 - row.exact) / n);
    return row;
}

struct WCheckpoint {
    double t = 0;
    double mean = 0; ///< E[W(t)] over all runs
    double se = 0;
};

struct WExceedance {
    double t = 0;
    double eta = 0;
    double freq = 0;  ///< fraction of runs with |W(t) - W(t_large)| > eta
    double se = 0;
    double bound = 0; ///< 2 e^{-(lambda-nu) t} / (eta^2 (1-q))
};

struct WLimitReport {
    double lambda = 0;
    double nu = 0;
    double t_large = 0;
    std::size_t runs = 0;
    std::size_t survivors = 0;
    double ks_statistic = 0;
    double ks_p = 0;
    std::vector<WCheckpoint> means;
    std::vector<WExceedance> exceedances;
    std::string warning;
};

/// Simulates W(t) = e^{-(lambda-nu) t} Z(t) up to t_large. Among runs alive at
/// t_large, W(t_large) is compared with Exp(1 - q) by KS; W(t_large) also
/// stands in for W in the deviation-bound check at the given times.
inline WLimitReport w_limit_test(double lambda, double nu, double t_large, std::size_t runs, std::uint64_t seed,
                                 const std::vector<double>& check_times = {1, 2, 3, 4, 5},
                                 const std::vector<double>& etas = {0.5, 1.0}) {
    if (!(lambda > nu))
        throw ArgumentError("w_limit_test needs lambda > nu");
    const double r = lambda - nu;
    if (t_large < 10.0 / r)
        throw ArgumentError("w_limit_test needs t_large >= 10 / (lambda - nu)");
    if (!std::is_sorted(check_times.begin(), check_times.end()) || (!check_times.empty() && check_times.back() >= t_large))
        throw ArgumentError("check times must be increasing and below t_large");
    WLimitReport rep;
    rep.lambda = lambda;
    rep.nu = nu;
    rep.t_large = t_large;
    rep.runs = runs;
    BDParams p;
    p.lambda = lambda;
    p.nu = nu;
    BdOptions opt;
    opt.checkpoints = check_times;
    const std::size_t k = check_times.size();
    std::vector<std::vector<double>> w_at(k, std::vector<double>(runs));
    std::vector<double> w_final(runs);
    std::vector<double> alive;
    for (std::size_t i = 0; i < runs; ++i) {
        auto rng = RandomStream::for_replicate(seed, i);
        const auto path = simulate_bd(p, t_large, rng, opt);
        for (std::size_t c = 0; c < k; ++c)
            w_at[c][i] = std::exp(-r * check_times[c]) * static_cast<double>(path.at_checkpoints[c]);
        w_final[i] = std::exp(-r * t_large) * static_cast<double>(path.final_size);
        if (path.final_size > 0)
            alive.push_back(w_final[i]);
    }
    rep.survivors = alive.size();
    const double one_minus_q = r / lambda;
    if (rep.survivors < 1000)
        rep.warning = "only " + std::to_string(rep.survivors) + " survivors; the KS comparison is unreliable";
    if (!alive.empty()) {
        const auto ks = stats::ks_test(alive, [one_minus_q](double x) { return x <= 0 ? 0.0 : -std::expm1(-one_minus_q * x); });
        rep.ks_statistic = ks.statistic;
        rep.ks_p = ks.p_value;
    }
    for (std::size_t c = 0; c < k; ++c) {
        const auto ms = stats::mean_se(w_at[c]);
        rep.means.push_back({check_times[c], ms.mean, ms.se});
        for (double eta : etas) {
            std::size_t hits = 0;
            for (std::size_t i = 0; i < runs; ++i)
                hits += std::abs(w_at[c][i] - w_final[i]) > eta;
            WExceedance e;
            e.t = check_times[c];
            e.eta = eta;
            e.freq = static_cast<double>(hits) / static_cast<double>(runs);
            e.se = std::sqrt(e.freq * (1.0 - e.freq) / static_cast<double>(runs));
            e.bound = 2.0 * std::exp(-r * check_times[c]) / (eta * eta * one_minus_q);
            rep.exceedances.push_back(e);
        }
    }
    const auto ms = stats::mean_se(w_final);
    rep.means.push_back({t_large, ms.mean, ms.se});
    return rep;
}

// --------------------------------------------------------------------------
// Size of an early family

enum class TailVariant { central, plus, minus };

/// Immigrants arrive on (0, xi - tau] and grow until tau' - tau. `central`
/// uses phi = s e^{s q t}, lambda = 1 + s q, nu = 1; `plus` and `minus` use
/// the bounding processes phi^{+-}, lambda^{+-}, nu^{+-}.
struct FamilyTailSpec {
    double q = 1000;
    double s = 1e-5;
    double b = 3;
    double mu = 0;       ///< enters nu^- = 1 + mu
    double delta = 0.02;
    double C4 = 1;
    TailVariant variant = TailVariant::central;
    std::vector<double> xs{0.5, 1.0, 2.0};
    std::size_t reps = 1'000'000;
    std::uint64_t seed = 1;
};

struct TailProcess {
    double lambda = 0;
    double nu = 0;
    ImmigrationProfile immigration;
    double horizon = 0;  ///< tau' - tau
    double scale = 0;    ///< e^{s q (tau' - tau)} = (s q)^{-3}
};

inline TailProcess tail_process(const FamilyTailSpec& spec) {
    if (!(spec.q >= 1.0) || !(spec.s > 0.0) || !(spec.s * spec.q < 1.0))
        throw ConfigError("family tail needs q >= 1, s > 0 and s q < 1");
    const double sq = spec.s * spec.q;
    TailProcess tp;
    tp.horizon = 3.0 * std::log(1.0 / sq) / sq;
    tp.scale = std::pow(sq, -3.0);
    const double window = std::max(0.0, (std::log(1.0 / sq) + spec.b) / sq);
    if (window >= tp.horizon)
        throw ConfigError("family tail needs xi < tau', i.e. b < 2 log(1/(s q))");
    tp.immigration.t_cut = window;
    switch (spec.variant) {
    case TailVariant::central:
        tp.lambda = 1.0 + sq;
        tp.nu = 1.0;
        tp.immigration.amplitude = spec.s;
        tp.immigration.growth = sq;
        break;
    case TailVariant::plus:
        tp.lambda = 1.0 + spec.s * (spec.q + spec.C4);
        tp.nu = 1.0 - spec.s;
        tp.immigration.amplitude = (1.0 + spec.delta) * spec.s;
        tp.immigration.growth = spec.s * (spec.q + spec.C4);
        break;
    case TailVariant::minus:
        tp.lambda = 1.0 + spec.s * (spec.q - spec.C4);
        tp.nu = 1.0 + spec.mu;
        tp.immigration.amplitude = (1.0 - spec.delta) * spec.s;
        tp.immigration.growth = spec.s * (spec.q - spec.C4);
        break;
    }
    return tp;
}

struct TailRow {
    double x = 0;
    double freq = 0;
    double se = 0;
    double reference = 0; ///< 1 / (q x)
    double ratio = 0;     ///< freq q x
    double ratio_se = 0;
};

struct HalvingRow {
    double x = 0;
    double ratio = 0;   ///< freq(x) / freq(2x); 2 under the 1/x law
    double se = 0;
    double z = 0;       ///< (ratio - 2) / se
};

struct TailReport {
    TailProcess process;
    double mean_immigrants = 0;
    std::vector<TailRow> rows;
    std::vector<HalvingRow> halving; ///< for every x whose double is also in xs
};

/// Empirical P(X(tau' - tau) > x e^{s q (tau' - tau)}). Each immigrant's
/// family size at the horizon is drawn from the exact birth-death law.
inline TailReport family_tail_estimate(const FamilyTailSpec& spec) {
    if (spec.xs.empty() || spec.reps == 0)
        throw ArgumentError("family tail needs thresholds and replicates");
    TailReport rep;
    rep.process = tail_process(spec);
    const auto& tp = rep.process;
    rep.mean_immigrants = tp.immigration.integral(0.0, tp.immigration.t_cut);
    const std::size_t m = spec.xs.size();
    std::vector<double> hits(m, 0.0);
    std::vector<std::vector<double>> joint(m, std::vector<double>(m, 0.0));
    for (std::size_t r = 0; r < spec.reps; ++r) {
        auto rng = RandomStream::for_replicate(spec.seed, r);
        double t = 0.0;
        double total = 0.0;
        while (true) {
            t = tp.immigration.next_arrival(t, rng.exponential(1.0));
            if (std::isinf(t))
                break;
            total += static_cast<double>(sample_bd_size(tp.lambda, tp.nu, tp.horizon - t, rng));
        }
        for (std::size_t a = 0; a < m; ++a) {
            if (total <= spec.xs[a] * tp.scale)
                continue;
            hits[a] += 1.0;
            for (std::size_t c = 0; c < m; ++c)
                joint[a][c] += total > spec.xs[c] * tp.scale;
        }
    }
    const double n = static_cast<double>(spec.reps);
    for (std::size_t a = 0; a < m; ++a) {
        TailRow row;
        row.x = spec.xs[a];
        row.freq = hits[a] / n;
        row.se = std::sqrt(row.freq * (1.0 - row.freq) / n);
        row.reference = 1.0 / (spec.q * row.x);
        row.ratio = row.freq / row.reference;
        row.ratio_se = row.se / row.reference;
        rep.rows.push_back(row);
    }
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t c = 0; c < m; ++c) {
            if (std::abs(spec.xs[c] - 2.0 * spec.xs[a]) > 1e-12 * spec.xs[c])
                continue;
            const double fa = hits[a] / n, fc = hits[c] / n;
            if (fc <= 0.0)
                continue;
            const double cov = joint[a][c] / n - fa * fc; // {> 2x} inside {> x}
            HalvingRow h;
            h.x = spec.xs[a];
            h.ratio = fa / fc;
            const double rel = fa * (1 - fa) / (n * fa * fa) + fc * (1 - fc) / (n * fc * fc) - 2.0 * cov / (n * fa * fc);
            h.se = h.ratio * std::sqrt(std::max(rel, 0.0));
            h.z = (h.ratio - 2.0) / h.se;
            rep.halving.push_back(h);
        }
    }
    return rep;
}

// --------------------------------------------------------------------------
// Three-color coupling

struct CouplingParams {
    double delta = 0.25;          ///< immigration band (1 +- delta)
    double C4 = 2.0;              ///< growth band s (q +- C4)
    double horizon = 0;           ///< time after tau_j to run to; 0 stops at kappa
    double kappa_level = 0;       ///< X^+ level that breaks the coupling; 0 means s / (2 mu)
    bool track_plus_after_kappa = true;
    std::vector<double> checkpoints; ///< times after tau_j
    bool record_path = false;
    std::int64_t cap = 100'000'000;
};

/// Rates of the two bounding processes.
struct CouplingRates {
    double lambda_minus = 0, lambda_plus = 0;
    double nu_minus = 0, nu_plus = 0;
    ImmigrationProfile phi_minus, phi_plus;
};

inline CouplingRates coupling_rates(double q, double s, double mu, double window, double delta, double C4) {
    CouplingRates r;
    r.lambda_minus = 1.0 + s * (q - C4);
    r.lambda_plus = 1.0 + s * (q + C4);
    r.nu_minus = 1.0 + mu;
    r.nu_plus = 1.0 - s;
    r.phi_minus = {(1.0 - delta) * s, s * (q - C4), window};
    r.phi_plus = {(1.0 + delta) * s, s * (q + C4), window};
    return r;
}

struct CouplingRow {
    double t = 0;             ///< time after tau_j
    std::int64_t x_minus = 0; ///< red
    std::int64_t x_prime = 0; ///< red and yellow (the original family); -1 once the feed has ended
    std::int64_t x_plus = 0;  ///< all colours; -1 when not tracked
};

struct CouplingRun {
    CouplingRates rates;
    double q = 0;
    double window = 0;        ///< xi - tau
    double kappa = 0;
    bool kappa_by_level = false;
    bool valid = true;
    std::string flag;         ///< why the run left the rate bands
    double flag_time = 0;
    std::uint64_t events = 0;
    std::uint64_t sandwich_checks = 0;
    std::uint64_t sandwich_violations = 0;
    std::uint64_t correspondence_errors = 0; ///< red + yellow differing from X'
    std::vector<CouplingRow> path;
    std::vector<CouplingRow> at_checkpoints;
};

namespace detail {

class Coupler {
  public:
    Coupler(const EarlyFamilyFeed& feed, const CouplingParams& cp, RandomStream& rng)
        : feed_(feed), cp_(cp), rng_(rng) {
        if (!feed.started)
            throw ArgumentError("coupling needs a feed that reached tau_j");
        run_.q = feed.front.q;
        run_.window = feed.front.xi - feed.front.tau;
        run_.rates = coupling_rates(run_.q, feed.s, feed.mu, run_.window, cp.delta, cp.C4);
        level_ = cp.kappa_level > 0 ? cp.kappa_level : feed.s / (2.0 * feed.mu);
        feed_end_ = feed.t_end - feed.front.tau;
        horizon_ = cp.horizon > 0 ? cp.horizon : feed_end_;
        color_.assign(static_cast<std::size_t>(feed.N), none);
        if (!std::is_sorted(cp.checkpoints.begin(), cp.checkpoints.end()))
            throw ArgumentError("coupling checkpoints must be increasing");
    }

    CouplingRun run() {
        coupled_phase();
        if (cp_.horizon <= 0)
            horizon_ = run_.kappa;
        if (run_.valid)
            free_phase();
        while (next_cp_ < cp_.checkpoints.size())
            checkpoint_row(cp_.checkpoints[next_cp_++], run_.valid);
        return std::move(run_);
    }

  private:
    static constexpr std::uint8_t none = 0, red = 1, yellow = 2;

    double abs_time(double t) const { return feed_.front.tau + t; }
    double fitness(const TypeStep& e) const {
        const double M = static_cast<double>(e.type_sum) / static_cast<double>(feed_.N);
        return std::max(0.0, 1.0 + feed_.s * (static_cast<double>(feed_.j) - M));
    }
    std::int64_t plus() const { return R_ + Y_ + Bl_; }

    std::int64_t x_prime_at(double t) const { return t < feed_end_ ? feed_.at(abs_time(t)).x : -1; }

    void checkpoint_row(double t, bool have) {
        CouplingRow row{t, -1, -1, -1};
        if (have) {
            row.x_minus = R_;
            row.x_prime = x_prime_at(t);
            row.x_plus = plus_tracked_ ? plus() : -1;
        }
        run_.at_checkpoints.push_back(row);
    }

    void checkpoints_before(double t) {
        while (next_cp_ < cp_.checkpoints.size() && cp_.checkpoints[next_cp_] < t)
            checkpoint_row(cp_.checkpoints[next_cp_++], true);
    }

    void flag(double t, std::string why) {
        run_.valid = false;
        run_.flag = std::move(why);
        run_.flag_time = t;
    }

    void record(double t) {
        if (cp_.record_path)
            run_.path.push_back({t, R_, coupled_ ? x_prime_at(t) : -1, plus_tracked_ ? plus() : -1});
    }

    void check_sandwich(std::int64_t xp) {
        ++run_.sandwich_checks;
        if (!(R_ <= xp && xp <= plus()))
            ++run_.sandwich_violations;
        if (R_ + Y_ != xp)
            ++run_.correspondence_errors;
    }

    void remove_colour(std::uint8_t c) {
        if (c == red)
            --R_;
        else if (c == yellow)
            --Y_;
        else
            ++run_.correspondence_errors;
    }
    void add_colour(std::uint8_t c) { (c == red ? R_ : Y_) += 1; }

    // Returns false if the event used a probability outside [0, 1].
    bool apply_feed_event(const FeedEvent& ev, double t) {
        const auto& env = feed_.before(ev.t);
        const auto& rt = run_.rates;
        const double N = static_cast<double>(feed_.N);
        const double F = fitness(env);
        const double xp = static_cast<double>(env.x);
        const double B1 = (1.0 - xp / N) * F;
        const double D1 = 1.0 + feed_.mu - xp * F / N;
        const auto v = static_cast<std::size_t>(ev.victim);
        switch (ev.kind) {
        case FeedKind::immigrant: {
            const double mux = feed_.mu * static_cast<double>(env.x_prev);
            const double p = rt.phi_minus.rate(t) / mux;
            if (!(p <= 1.0)) {
                flag(t, "immigration below phi^-");
                return false;
            }
            if (color_[v] != none)
                ++run_.correspondence_errors;
            color_[v] = rng_.uniform() <= p ? red : yellow;
            add_colour(color_[v]);
            break;
        }
        case FeedKind::pure_birth: {
            const auto c = color_[static_cast<std::size_t>(ev.parent)];
            std::uint8_t child = yellow;
            if (c == red) {
                const double p = rt.lambda_minus / B1;
                if (!(p <= 1.0)) {
                    flag(t, "pure birth rate below lambda^-");
                    return false;
                }
                child = rng_.uniform() <= p ? red : yellow;
            } else if (c == none) {
                ++run_.correspondence_errors;
            }
            if (color_[v] != none)
                ++run_.correspondence_errors;
            color_[v] = child;
            add_colour(child);
            break;
        }
        case FeedKind::pure_death: {
            const double p = rt.nu_plus / D1;
            if (!(p <= 1.0)) {
                flag(t, "pure death rate below nu^+");
                return false;
            }
            remove_colour(color_[v]);
            if (rng_.uniform() > p)
                ++Bl_;
            color_[v] = none;
            break;
        }
        case FeedKind::birth_death: {
            if (color_[static_cast<std::size_t>(ev.parent)] == none)
                ++run_.correspondence_errors;
            // The dying individual turns blue; the newborn is yellow.
            remove_colour(color_[v]);
            ++Bl_;
            color_[v] = yellow;
            ++Y_;
            break;
        }
        }
        return true;
    }

    void coupled_phase() {
        const auto& rt = run_.rates;
        const double blue_rate = rt.lambda_plus + rt.nu_plus;
        const double p_blue_birth = rt.lambda_plus / blue_rate;
        const double dom = rt.lambda_plus - rt.lambda_minus; // bounds lambda^+ - B*
        const double end = std::min(feed_end_, horizon_);
        double t = 0.0;
        std::size_t fe = 0;
        record(t);
        while (true) {
            const double t_feed = fe < feed_.events.size() ? feed_.events[fe].t - feed_.front.tau : kInf;
            const double t_blue = Bl_ > 0 ? t + rng_.exponential(static_cast<double>(Bl_) * blue_rate) : kInf;
            const std::int64_t ry = R_ + Y_;
            const double t_aug = ry > 0 && dom > 0 ? t + rng_.exponential(static_cast<double>(ry) * dom) : kInf;
            const double t_imm = rt.phi_plus.next_arrival(t, rng_.exponential(1.0));
            const double t_next = std::min({t_feed, t_blue, t_aug, t_imm});
            if (t_next >= end) {
                checkpoints_before(end);
                t = end;
                break;
            }
            checkpoints_before(t_next);
            t = t_next;
            ++run_.events;
            if (t_next == t_feed) {
                const auto& ev = feed_.events[fe++];
                if (!apply_feed_event(ev, t))
                    return;
                check_sandwich(feed_.at(ev.t).x);
            } else if (t_next == t_blue) {
                if (rng_.uniform() < p_blue_birth)
                    ++Bl_;
                else
                    --Bl_;
            } else if (t_next == t_aug) {
                const double gap = rt.lambda_plus - fitness(feed_.at(abs_time(t)));
                if (gap < 0.0 || gap > dom) {
                    flag(t, "total birth rate outside [lambda^-, lambda^+]");
                    return;
                }
                if (rng_.uniform() * dom < gap)
                    ++Bl_;
            } else {
                const double mux = feed_.mu * static_cast<double>(feed_.at(abs_time(t)).x_prev);
                const double phi = rt.phi_plus.rate(t);
                if (mux > phi) {
                    flag(t, "immigration above phi^+");
                    return;
                }
                if (rng_.uniform() * phi < phi - mux)
                    ++Bl_;
            }
            if (t_next != t_feed)
                check_sandwich(feed_.at(abs_time(t)).x);
            record(t);
            if (static_cast<double>(plus()) >= level_) {
                run_.kappa = t;
                run_.kappa_by_level = true;
                coupled_ = false;
                return;
            }
            if (plus() > cp_.cap)
                throw CapabilityError("coupling population exceeded the cap");
        }
        run_.kappa = t;
        coupled_ = false;
    }

    void free_phase() {
        const auto& rt = run_.rates;
        Bl_ += Y_;
        Y_ = 0;
        std::fill(color_.begin(), color_.end(), none);
        plus_tracked_ = cp_.track_plus_after_kappa;
        double t = run_.kappa;
        if (!plus_tracked_)
            Bl_ = 0;
        const double red_rate = plus_tracked_ ? rt.lambda_plus + rt.nu_minus : rt.lambda_minus + rt.nu_minus;
        const double blue_rate = rt.lambda_plus + rt.nu_plus;
        const auto& imm = plus_tracked_ ? rt.phi_plus : rt.phi_minus;
        while (true) {
            const double t_red = R_ > 0 ? t + rng_.exponential(static_cast<double>(R_) * red_rate) : kInf;
            const double t_blue = Bl_ > 0 ? t + rng_.exponential(static_cast<double>(Bl_) * blue_rate) : kInf;
            const double t_imm = imm.next_arrival(t, rng_.exponential(1.0));
            const double t_next = std::min({t_red, t_blue, t_imm});
            if (t_next >= horizon_) {
                checkpoints_before(horizon_);
                break;
            }
            checkpoints_before(t_next);
            t = t_next;
            ++run_.events;
            if (t_next == t_red) {
                // Red gives birth to red at lambda^-, to blue at lambda^+ - lambda^-,
                // dies at nu^+ and turns blue at nu^- - nu^+.
                const double u = rng_.uniform() * red_rate;
                if (u < rt.lambda_minus) {
                    ++R_;
                } else if (plus_tracked_) {
                    if (u < rt.lambda_plus)
                        ++Bl_;
                    else if (u < rt.lambda_plus + rt.nu_plus)
                        --R_;
                    else {
                        --R_;
                        ++Bl_;
                    }
                } else {
                    --R_;
                }
            } else if (t_next == t_blue) {
                if (rng_.uniform() * blue_rate < rt.lambda_plus)
                    ++Bl_;
                else
                    --Bl_;
            } else if (plus_tracked_) {
                if (rng_.uniform() * rt.phi_plus.rate(t) < rt.phi_minus.rate(t))
                    ++R_;
                else
                    ++Bl_;
            } else {
                ++R_;
            }
            record(t);
            if (plus() > cp_.cap)
                throw CapabilityError("coupling population exceeded the cap");
        }
    }

    const EarlyFamilyFeed& feed_;
    const CouplingParams& cp_;
    RandomStream& rng_;
    CouplingRun run_;
    std::vector<std::uint8_t> color_;
    std::int64_t R_ = 0, Y_ = 0, Bl_ = 0;
    double level_ = 0;
    double feed_end_ = 0;
    double horizon_ = 0;
    bool coupled_ = true;
    bool plus_tracked_ = true;
    std::size_t next_cp_ = 0;
};

} // namespace detail

/// Runs the red/yellow/blue construction on a recorded early-family feed.
/// Before kappa, red and yellow individuals follow the original family one to
/// one; afterwards both bounding processes evolve on their own. A run whose
/// feed leaves the rate bands is returned with valid = false.
inline CouplingRun run_coupling(const EarlyFamilyFeed& feed, const CouplingParams& cp, RandomStream& rng) {
    if (!(cp.delta >= 0.0 && cp.delta < 1.0) || !(cp.C4 >= 0.0))
        throw ConfigError("coupling bands need 0 <= delta < 1 and C4 >= 0");
    return detail::Coupler(feed, cp, rng).run();
}

/// Simulates the population until tau_{j+1} (or the model horizon) and
/// returns the early-family feed for type j.
inline EarlyFamilyFeed record_early_family(const ModelParams& p, std::int32_t j, double b, RandomStream& rng) {
    auto st = init_population(p);
    EarlyFamilyRecorder rec(j, p, b);
    rec.start(st);
    const auto sc = scaling_constants(p.N, p.mu, p.s);
    run_until(st, p, p.T * sc.a_N, rng, rec);
    return rec.take();
}

} // namespace bsgen
