#pragma once

#include <bsgen/error.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace bsgen {

/// Mutation-count and time scales of the population model, plus the three
/// finite-N ratios whose limits the asymptotic assumptions constrain.
struct ScaleConstants {
    double k_N = 0;     ///< ln N / ln(s/mu)
    double a_N = 0;     ///< ln(s/mu) / s, in model time units
    double a1 = 0;      ///< k_N / ln(1/s); should be large
    double a2 = 0;      ///< k_N ln k_N / ln(s/mu); should be small
    double a3 = 0;      ///< s k_N; should be small
};

inline ScaleConstants scaling_constants(std::int64_t N, double mu, double s) {
    if (N < 2)
        throw ConfigError("N must be at least 2 (got " + std::to_string(N) + ")");
    if (!(mu > 0.0) || !(s < 1.0) || !(mu < s))
        throw ConfigError("scaling requires 0 < mu < s < 1");
    const double log_ratio = std::log(s / mu);
    ScaleConstants c;
    c.k_N = std::log(static_cast<double>(N)) / log_ratio;
    c.a_N = log_ratio / s;
    c.a1 = c.k_N / std::log(1.0 / s);
    c.a2 = c.k_N * std::log(c.k_N) / log_ratio;
    c.a3 = s * c.k_N;
    return c;
}

/// Which one-sided value to report at the discontinuity t = 1.
enum class Side { left, right };

/// Grid solution of the delay-integral equation
///
///     q(t) = e^t                      for 0 <= t < 1
///     q(t) = integral_{t-1}^{t} q(u)  for t >= 1
///
/// on t_i = i h. The grid point t = 1 carries both one-sided limits
/// (q(1-) = e, q(1+) = e - 1); every other point has a single value.
class QProfile {
  public:
    QProfile() = default;

    /// `values[i]` is q(i h), taking the right limit at t = 1 when 1/h is an
    /// integer. `left_at_one` is q(1-) (ignored when no grid point sits at 1).
    QProfile(double step, std::vector<double> values, double left_at_one)
        : step_(step), values_(std::move(values)), left_at_one_(left_at_one) {
        if (!(step > 0.0) || values_.size() < 2)
            throw ArgumentError("QProfile needs a positive step and at least two grid values");
        const double per_unit = 1.0 / step_;
        const double rounded = std::round(per_unit);
        one_index_ = (std::abs(per_unit - rounded) < 1e-9 * per_unit && rounded < values_.size())
                         ? static_cast<std::size_t>(rounded)
                         : values_.size();
    }

    double step() const noexcept { return step_; }
    std::size_t size() const noexcept { return values_.size(); }
    double t_max() const noexcept { return step_ * static_cast<double>(values_.size() - 1); }
    double time_at(std::size_t i) const noexcept { return step_ * static_cast<double>(i); }

    /// Grid value; at the t = 1 point `side` selects the limit.
    double value_at(std::size_t i, Side side = Side::right) const {
        if (i == one_index_ && side == Side::left)
            return left_at_one_;
        return values_.at(i);
    }

    const std::vector<double>& values() const noexcept { return values_; }

    /// Piecewise-linear interpolation between grid points. Inside the cell
    /// ending at t = 1 the left limit is used as that cell's right endpoint.
    double operator()(double t, Side side = Side::right) const {
        if (t < 0.0 || t > t_max() * (1 + 1e-12))
            throw ArgumentError("q(t) requested outside [0, t_max]");
        const double x = t / step_;
        auto i = static_cast<std::size_t>(std::floor(x));
        if (i >= values_.size() - 1)
            return values_.back();
        const double frac = x - static_cast<double>(i);
        if (frac == 0.0)
            return value_at(i, side);
        const double lo = value_at(i, Side::right);
        const double hi = value_at(i + 1, Side::left);
        return lo + frac * (hi - lo);
    }

  private:
    double step_ = 0;
    std::vector<double> values_;
    double left_at_one_ = 0;
    std::size_t one_index_ = 0;
};

/// Solves the q equation on [0, t_max] with step h by the composite trapezoid
/// rule. The window integral is carried as a running sum, so each step is O(1);
/// the trapezoid is implicit in the newest value, which is solved for directly.
inline QProfile solve_q(double t_max, double h) {
    if (!(h > 0.0) || h > 1e-3)
        throw ArgumentError("solve_q: step must lie in (0, 1e-3]");
    if (!(t_max >= 2.0))
        throw ArgumentError("solve_q: t_max must be at least 2");
    const double per_unit = 1.0 / h;
    const auto m = static_cast<std::size_t>(std::llround(per_unit));
    if (std::abs(per_unit - static_cast<double>(m)) > 1e-9 * per_unit)
        throw ArgumentError("solve_q: 1/h must be an integer so that t = 1 is a grid point");
    const auto last = static_cast<std::size_t>(std::llround(std::floor(t_max * per_unit + 1e-9)));

    const double e = std::numbers::e;
    std::vector<double> q(last + 1);
    for (std::size_t i = 0; i < m; ++i)
        q[i] = std::exp(static_cast<double>(i) * h);

    // Interior trapezoid weight of each point; the jump point averages its limits.
    auto interior = [&](std::size_t k) { return k == m ? 0.5 * (e + q[m]) : q[k]; };

    // q(1+): window [0, 1] with the upper endpoint taken as q(1-) = e.
    double window = 0.0; // sum of q[k] for k in (i - m, i)
    for (std::size_t k = 1; k < m; ++k)
        window += q[k];
    q[m] = h * (0.5 * q[0] + window + 0.5 * e);

    // Slide: k = i - 1 enters the interior, k = i - m becomes the lower endpoint.
    for (std::size_t i = m + 1; i <= last; ++i) {
        window += interior(i - 1);
        window -= interior(i - m);
        const double lower = q[i - m]; // at i - m == m this is the right limit
        q[i] = h * (0.5 * lower + window) / (1.0 - 0.5 * h);
    }
    return QProfile(h, std::move(q), e);
}

/// Distance of the tail of a q profile from its limit 2.
struct QLimitReport {
    double t_last = 0;
    double q_last = 0;
    double deviation = 0;
    bool long_horizon = false; ///< t_last >= 20, where the limit is meaningful
};

inline QLimitReport q_limit_report(const QProfile& profile) {
    QLimitReport r;
    r.t_last = profile.t_max();
    r.q_last = profile.values().back();
    r.deviation = std::abs(r.q_last - 2.0);
    r.long_horizon = r.t_last >= 20.0;
    return r;
}

} // namespace bsgen
