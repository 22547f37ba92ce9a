#pragma once

#include <bsgen/error.hpp>
#include <bsgen/rng.hpp>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace bsgen::stats {

struct MeanSe {
    double mean = 0;
    double se = 0;
    double sd = 0;
    std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> x) {
    MeanSe r;
    r.n = x.size();
    if (x.empty())
        return r;
    r.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    if (x.size() > 1) {
        double ss = 0.0;
        for (double v : x)
            ss += (v - r.mean) * (v - r.mean);
        r.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
        r.se = r.sd / std::sqrt(static_cast<double>(x.size()));
    }
    return r;
}

/// Half the L1 distance between two probability vectors of equal length.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        throw ArgumentError("total_variation: length mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        d += std::abs(p[i] - q[i]);
    return 0.5 * d;
}

inline std::vector<double> normalize_counts(std::span<const double> counts) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (!(total > 0.0))
        throw ArgumentError("normalize_counts: empty histogram");
    std::vector<double> p(counts.begin(), counts.end());
    for (auto& v : p)
        v /= total;
    return p;
}

/// Upper tail of the Kolmogorov distribution, P(K > x).
inline double kolmogorov_survival(double x) {
    if (x <= 0.0)
        return 1.0;
    if (x < 0.2)
        return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-17)
            break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0;
    double p_value = 1;
};

/// One-sample KS test against a continuous CDF, with the Stephens small-sample
/// correction applied to the asymptotic tail.
inline KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty())
        throw ArgumentError("ks_test: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

/// Two-sample KS test.
inline KsResult ks_test_2(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw ArgumentError("ks_test_2: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

struct ChiSquareResult {
    double statistic = 0;
    int dof = 0;
    double p_value = 1;
};

/// Pearson goodness of fit. Cells whose expected count is below `min_expected`
/// are pooled into one cell (dropped if the pool itself stays below it).
inline ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> probs,
                                      double min_expected = 5.0) {
    if (observed.size() != probs.size())
        throw ArgumentError("chi_square_gof: length mismatch");
    const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
    double stat = 0.0;
    int cells = 0;
    double pooled_obs = 0.0, pooled_exp = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = n * probs[i];
        if (e < min_expected) {
            pooled_obs += observed[i];
            pooled_exp += e;
            continue;
        }
        stat += (observed[i] - e) * (observed[i] - e) / e;
        ++cells;
    }
    if (pooled_exp >= min_expected) {
        stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        ++cells;
    }
    ChiSquareResult r;
    r.statistic = stat;
    r.dof = cells - 1;
    if (r.dof >= 1)
        r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.dof), stat));
    return r;
}

/// Two-sided normal p-value for a z score.
inline double normal_two_sided_p(double z) {
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

/// Nonparametric bootstrap of the TV distance between the empirical law of
/// `labels` (state indices) and `reference`. Returns the replicate distances.
inline std::vector<double> bootstrap_tv(std::span<const std::size_t> labels, std::span<const double> reference,
                                        std::size_t resamples, RandomStream& rng) {
    if (labels.empty())
        throw ArgumentError("bootstrap_tv: no observations");
    std::vector<double> out;
    out.reserve(resamples);
    std::vector<double> counts(reference.size());
    for (std::size_t r = 0; r < resamples; ++r) {
        std::fill(counts.begin(), counts.end(), 0.0);
        for (std::size_t i = 0; i < labels.size(); ++i)
            counts.at(labels[rng.uniform_index(labels.size())]) += 1.0;
        out.push_back(total_variation(normalize_counts(counts), reference));
    }
    return out;
}

/// Parametric null of the TV statistic: TV between `reference` and the
/// empirical law of `n` draws from it.
inline std::vector<double> null_tv(std::span<const double> reference, std::size_t n, std::size_t resamples,
                                   RandomStream& rng) {
    std::vector<double> cumulative(reference.size());
    std::partial_sum(reference.begin(), reference.end(), cumulative.begin());
    std::vector<double> out;
    out.reserve(resamples);
    std::vector<double> counts(reference.size());
    for (std::size_t r = 0; r < resamples; ++r) {
        std::fill(counts.begin(), counts.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.uniform() * cumulative.back();
            auto pos = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
            counts[static_cast<std::size_t>(std::min<std::ptrdiff_t>(pos, static_cast<std::ptrdiff_t>(counts.size()) - 1))] += 1.0;
        }
        out.push_back(total_variation(normalize_counts(counts), reference));
    }
    return out;
}

/// Empirical quantile by linear interpolation of order statistics.
inline double quantile(std::vector<double> x, double p) {
    if (x.empty())
        throw ArgumentError("quantile: empty sample");
    std::sort(x.begin(), x.end());
    const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Least-squares line y = a + b x.
struct LinearFit {
    double intercept = 0;
    double slope = 0;
    double slope_se = 0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3)
        throw ArgumentError("linear_fit: need at least three paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0))
        throw ArgumentError("linear_fit: x has no spread");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
    }
    f.slope_se = std::sqrt(rss / (n - 2) / sxx);
    return f;
}

} // namespace bsgen::stats
