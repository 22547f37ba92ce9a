#pragma once

#include <bsgen/error.hpp>
#include <bsgen/partition.hpp>
#include <bsgen/rng.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace bsgen {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

namespace detail {

inline BigInt factorial(int n) {
    BigInt f = 1;
    for (int i = 2; i <= n; ++i)
        f *= i;
    return f;
}

inline BigInt binomial(int n, int k) {
    if (k < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    BigInt c = 1;
    for (int i = 1; i <= k; ++i) {
        c *= n - k + i;
        c /= i;
    }
    return c;
}

/// P(Binomial(m, y) >= r) for r in {0, 1, 2}, accurate for tiny y.
inline double binomial_tail(int m, double y, int r) {
    if (r <= 0)
        return 1.0;
    if (m < r)
        return 0.0;
    if (y >= 1.0)
        return 1.0;
    const double log_q = std::log1p(-y);
    const double none = std::exp(m * log_q);
    if (r == 1)
        return -std::expm1(m * log_q);
    if (m * y >= 0.5)
        return 1.0 - none - m * y * std::exp((m - 1) * log_q);
    // Sum the pmf from k = 2 upward; terms fall off geometrically when m y is small.
    double term = 0.5 * m * (m - 1) * y * y * std::exp((m - 2) * log_q);
    double sum = 0.0;
    const double ratio = y / (1.0 - y);
    for (int k = 2; k <= m && term > 0.0; ++k) {
        sum += term;
        if (term < sum * 1e-17)
            break;
        term *= ratio * (m - k) / (k + 1);
    }
    return sum;
}

} // namespace detail

/// Rate at which a given set of k out of b blocks merges:
/// lambda_{b,k} = (k-2)! (b-k)! / (b-1)!, exactly.
inline Rational merger_rate(int b, int k) {
    if (b < 2 || k < 2 || k > b)
        throw ArgumentError("merger_rate requires 2 <= k <= b");
    return Rational(detail::factorial(k - 2) * detail::factorial(b - k), detail::factorial(b - 1));
}

/// Total rate of leaving a state with b blocks: sum_k C(b,k) lambda_{b,k}.
inline Rational total_merger_rate(int b) {
    if (b < 2)
        throw ArgumentError("total_merger_rate requires b >= 2");
    Rational total = 0;
    for (int k = 2; k <= b; ++k)
        total += Rational(detail::binomial(b, k)) * merger_rate(b, k);
    return total;
}

/// A coalescent path: the initial partition followed by every jump.
struct CoalescentTrajectory {
    struct Event {
        double time = 0;
        Partition state;
        /// Participation probability y of the underlying point; NaN for the
        /// rate-matrix sampler.
        double y = std::numeric_limits<double>::quiet_NaN();
    };

    Partition initial;
    std::vector<Event> events;

    /// State at time t (right-continuous).
    const Partition& at(double t) const {
        const Partition* current = &initial;
        for (const auto& e : events) {
            if (e.time > t)
                break;
            current = &e.state;
        }
        return *current;
    }
};

namespace detail {

/// Uniform k-subset of {0..b-1} by partial Fisher-Yates.
inline std::vector<std::size_t> uniform_subset(std::size_t b, std::size_t k, RandomStream& rng) {
    std::vector<std::size_t> idx(b);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(b - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

} // namespace detail

/// Embedded-chain sampler driven directly by the merger rates. Caches, per
/// block count b, the total rate and the distribution of the merger size k.
class MarkovCoalescentSampler {
  public:
    CoalescentTrajectory sample(int n, double horizon, RandomStream& rng) {
        CoalescentTrajectory traj{Partition::singletons(n), {}};
        Partition current = traj.initial;
        double t = 0.0;
        while (current.block_count() >= 2) {
            const int b = static_cast<int>(current.block_count());
            const auto& table = table_for(b);
            t += rng.exponential(table.total);
            if (t > horizon)
                break;
            const double u = rng.uniform() * table.cumulative.back();
            const auto pos = std::upper_bound(table.cumulative.begin(), table.cumulative.end(), u);
            const int k = 2 + static_cast<int>(std::min<std::ptrdiff_t>(pos - table.cumulative.begin(),
                                                                      static_cast<std::ptrdiff_t>(b - 2)));
            const auto chosen = detail::uniform_subset(static_cast<std::size_t>(b), static_cast<std::size_t>(k), rng);
            current = merge_blocks(current, chosen);
            traj.events.push_back({t, current, std::numeric_limits<double>::quiet_NaN()});
        }
        return traj;
    }

  private:
    struct Table {
        double total = 0;
        std::vector<double> cumulative; // over k = 2..b
    };

    const Table& table_for(int b) {
        if (static_cast<std::size_t>(b) >= tables_.size())
            tables_.resize(static_cast<std::size_t>(b) + 1);
        auto& slot = tables_[static_cast<std::size_t>(b)];
        if (!slot) {
            Table t;
            t.total = static_cast<double>(total_merger_rate(b));
            double acc = 0.0;
            for (int k = 2; k <= b; ++k) {
                acc += static_cast<double>(Rational(detail::binomial(b, k)) * merger_rate(b, k));
                t.cumulative.push_back(acc);
            }
            slot = std::move(t);
        }
        return *slot;
    }

    std::vector<std::optional<Table>> tables_;
};

/// Sampler built on the Poisson construction: points (t, y) arrive with
/// intensity dt y^{-2} dy, and each block joins a point independently with
/// probability y. Only points in which at least two blocks join change the
/// partition; those arrive at rate
///
///     r(b) = integral_0^1 y^{-2} P(Binomial(b, y) >= 2) dy,
///
/// and carry y with the normalized density of that integrand. The density is
/// tabulated once per block count on a 10^4-cell grid in sqrt(y) (dense near
/// zero, where the mass sits for large b) and inverted by interpolation.
class PoissonCoalescentSampler {
  public:
    static constexpr std::size_t grid_cells = 10000;

    /// `max_events` stops the path after that many mergers.
    CoalescentTrajectory sample(int n, double horizon, RandomStream& rng,
                                std::size_t max_events = std::numeric_limits<std::size_t>::max()) {
        CoalescentTrajectory traj{Partition::singletons(n), {}};
        Partition current = traj.initial;
        double t = 0.0;
        while (current.block_count() >= 2 && traj.events.size() < max_events) {
            const int b = static_cast<int>(current.block_count());
            const auto& table = table_for(b);
            t += rng.exponential(table.cumulative.back());
            if (t > horizon)
                break;
            const double y = draw_y(table, rng);
            std::vector<std::size_t> joined;
            int needed = 2;
            for (int i = 0; i < b; ++i) {
                const int remaining = b - i;
                double p = y;
                if (needed > 0)
                    p = y * detail::binomial_tail(remaining - 1, y, needed - 1) /
                        detail::binomial_tail(remaining, y, needed);
                if (rng.uniform() < p) {
                    joined.push_back(static_cast<std::size_t>(i));
                    needed = std::max(needed - 1, 0);
                }
            }
            current = merge_blocks(current, joined);
            traj.events.push_back({t, current, y});
        }
        return traj;
    }

    /// Tabulated rate of partition-changing points with b blocks.
    double effective_rate(int b) { return table_for(b).cumulative.back(); }

  private:
    struct Table {
        std::vector<double> y;
        std::vector<double> cumulative;
    };

    static double density(int b, double y) {
        if (y == 0.0)
            return 0.5 * b * (b - 1);
        return detail::binomial_tail(b, y, 2) / (y * y);
    }

    const Table& table_for(int b) {
        if (static_cast<std::size_t>(b) >= tables_.size())
            tables_.resize(static_cast<std::size_t>(b) + 1);
        auto& slot = tables_[static_cast<std::size_t>(b)];
        if (!slot) {
            Table t;
            t.y.resize(grid_cells + 1);
            t.cumulative.resize(grid_cells + 1);
            const double du = 1.0 / static_cast<double>(grid_cells);
            double prev = 0.0; // integrand in u: density(u^2) * 2u
            for (std::size_t i = 0; i <= grid_cells; ++i) {
                const double u = static_cast<double>(i) * du;
                t.y[i] = u * u;
                const double f = density(b, t.y[i]) * 2.0 * u;
                t.cumulative[i] = i == 0 ? 0.0 : t.cumulative[i - 1] + 0.5 * du * (prev + f);
                prev = f;
            }
            slot = std::move(t);
        }
        return *slot;
    }

    static double draw_y(const Table& t, RandomStream& rng) {
        const double target = rng.uniform() * t.cumulative.back();
        auto pos = std::upper_bound(t.cumulative.begin(), t.cumulative.end(), target);
        auto i = static_cast<std::size_t>(pos - t.cumulative.begin());
        i = std::clamp<std::size_t>(i, 1, t.cumulative.size() - 1);
        const double lo = t.cumulative[i - 1];
        const double width = t.cumulative[i] - lo;
        const double frac = width > 0.0 ? (target - lo) / width : 0.5;
        return t.y[i - 1] + frac * (t.y[i] - t.y[i - 1]);
    }

    std::vector<std::optional<Table>> tables_;
};

/// Rate-matrix sampler with a per-thread cache of merger-size tables.
inline CoalescentTrajectory sample_bs_markov(int n, double horizon, RandomStream& rng) {
    thread_local MarkovCoalescentSampler sampler;
    return sampler.sample(n, horizon, rng);
}

/// Poisson-construction sampler with a per-thread cache of y tables.
inline CoalescentTrajectory sample_bs_poisson(int n, double horizon, RandomStream& rng) {
    thread_local PoissonCoalescentSampler sampler;
    return sampler.sample(n, horizon, rng);
}

/// All set partitions of {1..n} in restricted-growth-string order, with an
/// index lookup. The first state is the singleton partition.
class PartitionSpace {
  public:
    static constexpr int max_n = 6;

    explicit PartitionSpace(int n) : n_(n) {
        if (n < 1)
            throw ArgumentError("PartitionSpace needs n >= 1");
        if (n > max_n)
            throw CapabilityError("exact partition distributions are limited to n <= 6");
        std::vector<int> rgs(static_cast<std::size_t>(n), 0);
        enumerate(rgs, 1, 0);
        // Put the singleton partition first and order the rest by decreasing block count.
        std::stable_sort(states_.begin(), states_.end(),
                         [](const Partition& a, const Partition& b) { return a.block_count() > b.block_count(); });
        for (std::size_t i = 0; i < states_.size(); ++i)
            index_.emplace(key(states_[i]), i);
    }

    int n() const noexcept { return n_; }
    std::size_t size() const noexcept { return states_.size(); }
    const Partition& state(std::size_t i) const { return states_.at(i); }
    const std::vector<Partition>& states() const noexcept { return states_; }

    std::size_t index_of(const Partition& p) const {
        auto it = index_.find(key(p));
        if (it == index_.end() || p.n() != n_)
            throw ArgumentError("partition not in this space");
        return it->second;
    }

  private:
    static std::uint64_t key(const Partition& p) {
        std::uint64_t k = 0;
        for (int label : p.labels())
            k = k * 8 + static_cast<std::uint64_t>(label);
        return k;
    }

    void enumerate(std::vector<int>& rgs, std::size_t pos, int max_label) {
        if (pos == rgs.size()) {
            states_.push_back(Partition::from_labels<int>(rgs));
            return;
        }
        for (int l = 0; l <= max_label + 1; ++l) {
            rgs[pos] = l;
            enumerate(rgs, pos + 1, std::max(max_label, l));
        }
    }

    int n_;
    std::vector<Partition> states_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Forward equations of the partition-valued chain, solved by uniformization.
class BsForwardSolver {
  public:
    /// Poisson tail mass at which each uniformization series is cut.
    static constexpr double truncation = 1e-12;

    explicit BsForwardSolver(int n) : space_(n), uniform_rate_(std::max(n - 1, 1)) {
        transitions_.resize(space_.size());
        for (std::size_t s = 0; s < space_.size(); ++s) {
            const auto& p = space_.state(s);
            const int b = static_cast<int>(p.block_count());
            if (b < 2)
                continue;
            for (std::uint32_t mask = 0; mask < (1u << b); ++mask) {
                const int k = std::popcount(mask);
                if (k < 2)
                    continue;
                std::vector<std::size_t> chosen;
                for (int i = 0; i < b; ++i)
                    if (mask & (1u << i))
                        chosen.push_back(static_cast<std::size_t>(i));
                const double rate = static_cast<double>(merger_rate(b, k));
                transitions_[s].push_back({space_.index_of(merge_blocks(p, chosen)), rate});
            }
        }
        exit_.assign(space_.size(), 0.0);
        for (std::size_t s = 0; s < space_.size(); ++s)
            for (const auto& tr : transitions_[s])
                exit_[s] += tr.rate;
    }

    const PartitionSpace& space() const noexcept { return space_; }

    /// Row vector v P(t).
    std::vector<double> propagate(std::vector<double> v, double t) const {
        if (t < 0.0)
            throw ArgumentError("propagate: negative time");
        const double lam = uniform_rate_;
        double remaining = t;
        while (remaining > 0.0) {
            const double dt = std::min(remaining, 30.0 / lam);
            remaining -= dt;
            const double mean = lam * dt;
            double weight = std::exp(-mean);
            double mass = weight;
            std::vector<double> acc(v.size());
            std::vector<double> cur = v;
            for (std::size_t i = 0; i < v.size(); ++i)
                acc[i] = weight * cur[i];
            for (int m = 1; 1.0 - mass > truncation; ++m) {
                cur = step(cur);
                weight *= mean / m;
                mass += weight;
                for (std::size_t i = 0; i < v.size(); ++i)
                    acc[i] += weight * cur[i];
                if (m > 10000)
                    throw InternalError("uniformization failed to converge");
            }
            v = std::move(acc);
        }
        return v;
    }

    std::vector<double> point_mass(std::size_t state) const {
        std::vector<double> v(space_.size(), 0.0);
        v.at(state) = 1.0;
        return v;
    }

  private:
    struct Transition {
        std::size_t target;
        double rate;
    };

    // One step of the uniformized jump chain: v (I + Q / lam).
    std::vector<double> step(const std::vector<double>& v) const {
        std::vector<double> out(v.size(), 0.0);
        for (std::size_t s = 0; s < v.size(); ++s) {
            if (v[s] == 0.0)
                continue;
            out[s] += v[s] * (1.0 - exit_[s] / uniform_rate_);
            for (const auto& tr : transitions_[s])
                out[tr.target] += v[s] * tr.rate / uniform_rate_;
        }
        return out;
    }

    PartitionSpace space_;
    double uniform_rate_;
    std::vector<std::vector<Transition>> transitions_;
    std::vector<double> exit_;
};

/// Exact law of the partition at each requested time, started from singletons.
/// Entry [i][s] is P(Pi(times[i]) = space.state(s)); states ordered as in
/// PartitionSpace(n).
inline std::vector<std::vector<double>> bs_exact_fdd(int n, std::span<const double> times) {
    BsForwardSolver solver(n);
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });
    std::vector<std::vector<double>> out(times.size());
    auto v = solver.point_mass(0);
    double t = 0.0;
    for (auto i : order) {
        if (times[i] < 0.0)
            throw ArgumentError("bs_exact_fdd: negative time");
        v = solver.propagate(std::move(v), times[i] - t);
        t = times[i];
        out[i] = v;
    }
    return out;
}

/// Exact joint law of (Pi(t_1), ..., Pi(t_d)) for increasing times. Keys are
/// state-index paths; paths with probability below `floor` are dropped.
inline std::map<std::vector<std::size_t>, double> bs_exact_joint(int n, std::span<const double> times,
                                                                 double floor = 1e-15) {
    BsForwardSolver solver(n);
    std::map<std::vector<std::size_t>, double> paths{{{}, 1.0}};
    std::size_t last_state = 0;
    double t = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t)
            throw ArgumentError("bs_exact_joint: times must be non-decreasing and non-negative");
        const double dt = times[k] - t;
        std::map<std::size_t, std::vector<double>> rows;
        std::map<std::vector<std::size_t>, double> next;
        for (const auto& [path, prob] : paths) {
            const std::size_t from = path.empty() ? last_state : path.back();
            auto it = rows.find(from);
            if (it == rows.end())
                it = rows.emplace(from, solver.propagate(solver.point_mass(from), dt)).first;
            for (std::size_t s = 0; s < it->second.size(); ++s) {
                const double p = prob * it->second[s];
                if (p < floor)
                    continue;
                auto extended = path;
                extended.push_back(s);
                next[std::move(extended)] += p;
            }
        }
        paths = std::move(next);
        t = times[k];
    }
    return paths;
}

} // namespace bsgen
