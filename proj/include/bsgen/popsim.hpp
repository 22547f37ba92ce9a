#pragma once

#include <bsgen/error.hpp>
#include <bsgen/rng.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace bsgen {

struct ModelParams {
    std::int64_t N = 10000;
    double mu = 1e-4;
    double s = 0.05;
    double T = 4.0; ///< horizon in units of a_N
    std::uint64_t seed = 1;
    double snapshot_dt = 0.0; ///< model time between snapshots; 0 picks a_N / 50
    std::int64_t simplify_interval = 0; ///< events between ancestry simplifications; 0 means N
};

/// Checks what the simulator itself needs. The neutral case (mu = 0 or s = 0)
/// is allowed here; the stricter 0 < mu < s is enforced by experiment configs.
inline void validate_model(const ModelParams& p) {
    if (p.N < 2)
        throw ConfigError("N must be at least 2");
    if (p.N > std::numeric_limits<std::int32_t>::max())
        throw ConfigError("N exceeds the 32-bit individual id range");
    if (!(p.mu >= 0.0) || !std::isfinite(p.mu))
        throw ConfigError("mu must be a finite non-negative rate");
    if (!(p.s >= 0.0) || !std::isfinite(p.s))
        throw ConfigError("s must be a finite non-negative selection coefficient");
    if (!(p.T > 0.0))
        throw ConfigError("T must be positive");
    if (p.snapshot_dt < 0.0)
        throw ConfigError("snapshot_dt must be non-negative");
    if (p.simplify_interval < 0)
        throw ConfigError("simplify_interval must be non-negative");
}

enum class EventKind : std::uint8_t { death_birth, mutation };

struct EventRecord {
    EventKind kind = EventKind::death_birth;
    double time = 0;
    std::int32_t victim = -1;     ///< replaced individual, or the mutating one
    std::int32_t parent = -1;     ///< death-birth only; may equal victim
    std::int32_t victim_type = 0; ///< type before the event
    std::int32_t new_type = 0;    ///< type after the event
};

/// Population of N individuals, each carrying a mutation count (type).
///
/// The mean type M is kept as an exact integer sum over individuals, so it never
/// drifts. Total fitness equals N exactly while no type is clamped at zero;
/// otherwise it is recomputed from the counts.
class PopulationState {
  public:
    PopulationState() = default;

    explicit PopulationState(std::int64_t N) : N_(N) {
        if (N < 2)
            throw ConfigError("N must be at least 2");
        type_of_.assign(static_cast<std::size_t>(N), 0);
        slot_.resize(static_cast<std::size_t>(N));
        members_.resize(1);
        members_[0].resize(static_cast<std::size_t>(N));
        for (std::int32_t i = 0; i < N; ++i) {
            members_[0][static_cast<std::size_t>(i)] = i;
            slot_[static_cast<std::size_t>(i)] = i;
        }
        counts_.assign(1, N);
    }

    double t = 0.0;

    std::int64_t N() const noexcept { return N_; }
    std::int32_t jmin() const noexcept { return jmin_; }
    std::int32_t jmax() const noexcept { return jmax_; }

    std::int64_t count(std::int64_t j) const noexcept {
        return j >= 0 && j < static_cast<std::int64_t>(counts_.size()) ? counts_[static_cast<std::size_t>(j)] : 0;
    }
    const std::vector<std::int64_t>& counts() const noexcept { return counts_; }

    double mean_type() const noexcept { return static_cast<double>(type_sum_) / static_cast<double>(N_); }
    std::int64_t type_sum() const noexcept { return type_sum_; }

    std::int32_t type_of(std::int32_t individual) const { return type_of_.at(static_cast<std::size_t>(individual)); }

    /// The j-th member (arbitrary order) of type `type`.
    std::int32_t member(std::int32_t type, std::int64_t index) const {
        return members_.at(static_cast<std::size_t>(type)).at(static_cast<std::size_t>(index));
    }

    double fitness(std::int64_t j) const noexcept { return std::max(0.0, 1.0 + s_ * (static_cast<double>(j) - mean_type())); }

    /// True when the least occupied type has fitness clamped at zero.
    bool clamped() const noexcept { return 1.0 + s_ * (static_cast<double>(jmin_) - mean_type()) <= 0.0; }

    /// Total fitness sum_j X_j max{0, 1 + s(j - M)}.
    double total_fitness() const {
        if (!clamped())
            return static_cast<double>(N_);
        return total_fitness_exact();
    }

    double total_fitness_exact() const {
        double w = 0.0;
        for (std::int32_t j = jmin_; j <= jmax_; ++j)
            w += static_cast<double>(counts_[static_cast<std::size_t>(j)]) * fitness(j);
        return w;
    }

    void set_selection(double s) noexcept { s_ = s; }
    double selection() const noexcept { return s_; }

    /// Moves an individual to a new type, keeping every index consistent.
    void retype(std::int32_t individual, std::int32_t new_type) {
        const auto ui = static_cast<std::size_t>(individual);
        const std::int32_t old_type = type_of_[ui];
        if (old_type == new_type)
            return;
        auto& from = members_[static_cast<std::size_t>(old_type)];
        const std::int32_t pos = slot_[ui];
        const std::int32_t moved = from.back();
        from[static_cast<std::size_t>(pos)] = moved;
        slot_[static_cast<std::size_t>(moved)] = pos;
        from.pop_back();
        if (static_cast<std::size_t>(new_type) >= members_.size()) {
            members_.resize(static_cast<std::size_t>(new_type) + 1);
            counts_.resize(static_cast<std::size_t>(new_type) + 1, 0);
        }
        auto& to = members_[static_cast<std::size_t>(new_type)];
        slot_[ui] = static_cast<std::int32_t>(to.size());
        to.push_back(individual);
        type_of_[ui] = new_type;
        --counts_[static_cast<std::size_t>(old_type)];
        ++counts_[static_cast<std::size_t>(new_type)];
        type_sum_ += new_type - old_type;
        jmax_ = std::max(jmax_, new_type);
        while (counts_[static_cast<std::size_t>(jmin_)] == 0)
            ++jmin_;
        while (counts_[static_cast<std::size_t>(jmax_)] == 0)
            --jmax_;
        jmin_ = std::min(jmin_, new_type);
    }

    /// Full consistency check of the redundant indices; throws InternalError.
    void check_invariants() const {
        std::int64_t total = 0, sum = 0;
        for (std::size_t j = 0; j < counts_.size(); ++j) {
            if (counts_[j] != static_cast<std::int64_t>(members_[j].size()))
                throw InternalError("count/member mismatch at type " + std::to_string(j));
            total += counts_[j];
            sum += static_cast<std::int64_t>(j) * counts_[j];
            for (std::size_t k = 0; k < members_[j].size(); ++k) {
                const auto ind = static_cast<std::size_t>(members_[j][k]);
                if (type_of_[ind] != static_cast<std::int32_t>(j) || slot_[ind] != static_cast<std::int32_t>(k))
                    throw InternalError("member index corrupted");
            }
        }
        if (total != N_)
            throw InternalError("population size not conserved");
        if (sum != type_sum_)
            throw InternalError("type sum out of sync");
        if (counts_[static_cast<std::size_t>(jmin_)] == 0 || counts_[static_cast<std::size_t>(jmax_)] == 0)
            throw InternalError("occupied type range out of sync");
    }

  private:
    std::int64_t N_ = 0;
    double s_ = 0.0;
    std::int64_t type_sum_ = 0;
    std::int32_t jmin_ = 0, jmax_ = 0;
    std::vector<std::int64_t> counts_;
    std::vector<std::int32_t> type_of_;
    std::vector<std::int32_t> slot_;
    std::vector<std::vector<std::int32_t>> members_;
};

inline PopulationState init_population(const ModelParams& params) {
    validate_model(params);
    PopulationState state(params.N);
    state.set_selection(params.s);
    return state;
}

/// Running counters kept by the event loop.
struct SimSummary {
    std::uint64_t events = 0;
    std::uint64_t death_births = 0;
    std::uint64_t mutations = 0;
    std::uint64_t clamped_events = 0;     ///< events drawn while a type was clamped
    std::uint64_t refreshes = 0;
    double max_fitness_drift = 0.0;       ///< |W_tot - recomputed| at refresh points
    double max_mean_drift = 0.0;          ///< |M - recomputed| at refresh points
    bool stopped_early = false;
};

/// Events between exact recomputations of M and W_tot.
inline constexpr std::uint64_t refresh_interval = 100000;

namespace detail {

inline std::int32_t draw_parent_type(const PopulationState& st, RandomStream& rng) {
    const double w = st.total_fitness();
    double u = rng.uniform() * w;
    const auto& counts = st.counts();
    const double M = st.mean_type();
    const double s = st.selection();
    std::int32_t j = st.jmin();
    for (; j < st.jmax(); ++j) {
        const double f = std::max(0.0, 1.0 + s * (static_cast<double>(j) - M));
        u -= static_cast<double>(counts[static_cast<std::size_t>(j)]) * f;
        if (u < 0.0)
            return j;
    }
    return st.jmax();
}

} // namespace detail

/// Draws the kind and participants of an event happening at st.t.
inline EventRecord apply_event_at(PopulationState& st, const ModelParams& params, RandomStream& rng,
                                  SimSummary* summary = nullptr) {
    EventRecord rec;
    rec.time = st.t;
    const auto N = static_cast<std::uint64_t>(st.N());
    if (summary && st.clamped())
        ++summary->clamped_events;
    if (rng.uniform() * (1.0 + params.mu) < 1.0) {
        rec.kind = EventKind::death_birth;
        rec.victim = static_cast<std::int32_t>(rng.uniform_index(N));
        rec.victim_type = st.type_of(rec.victim);
        const std::int32_t pt = detail::draw_parent_type(st, rng);
        const auto members = st.count(pt);
        rec.parent = st.member(pt, static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(members))));
        rec.new_type = pt;
        st.retype(rec.victim, pt);
        if (summary)
            ++summary->death_births;
    } else {
        rec.kind = EventKind::mutation;
        rec.victim = static_cast<std::int32_t>(rng.uniform_index(N));
        rec.victim_type = st.type_of(rec.victim);
        rec.new_type = rec.victim_type + 1;
        st.retype(rec.victim, rec.new_type);
        if (summary)
            ++summary->mutations;
    }
    if (summary) {
        ++summary->events;
        if (summary->events % refresh_interval == 0) {
            ++summary->refreshes;
            double sum = 0.0;
            for (std::int32_t j = st.jmin(); j <= st.jmax(); ++j)
                sum += static_cast<double>(j) * static_cast<double>(st.count(j));
            summary->max_mean_drift = std::max(summary->max_mean_drift, std::abs(st.mean_type() - sum / static_cast<double>(st.N())));
            if (!st.clamped()) {
                // Unclamped total fitness is N; compare against the direct sum.
                summary->max_fitness_drift =
                    std::max(summary->max_fitness_drift, std::abs(st.total_fitness_exact() - static_cast<double>(st.N())));
            }
        }
    }
    return rec;
}

/// Draws the next event, advancing state.t. Deaths occur at total rate N and
/// mutations at total rate N mu. The parent of a death-birth is drawn with
/// probability proportional to fitness, the victim included.
inline EventRecord step_event(PopulationState& st, const ModelParams& params, RandomStream& rng,
                              SimSummary* summary = nullptr) {
    const double N = static_cast<double>(st.N());
    st.t += rng.exponential(N * (1.0 + params.mu));
    return apply_event_at(st, params, rng, summary);
}

// Hook customization points. A hook may provide any subset of these members.
template <typename H>
concept HasBeforeEvent = requires(H& h, const PopulationState& st, double t) { h.before_event(st, t); };
template <typename H>
concept HasAfterEvent = requires(H& h, const PopulationState& st, const EventRecord& r) { h.after_event(st, r); };
template <typename H>
concept HasShouldStop = requires(H& h, const PopulationState& st) { { h.should_stop(st) } -> std::convertible_to<bool>; };
template <typename H>
concept HasFinish = requires(H& h, const PopulationState& st) { h.finish(st); };

/// Runs the chain up to t_end. `before_event(state, t_next)` fires while the
/// state still holds on [t, t_next); the event that would overshoot t_end is
/// discarded (the clocks are memoryless), and `finish(state)` fires with
/// state.t == t_end unless a hook stopped the run first.
template <typename... Hooks>
SimSummary run_until(PopulationState& st, const ModelParams& params, double t_end, RandomStream& rng, Hooks&... hooks) {
    if (t_end < st.t)
        throw ArgumentError("run_until: t_end precedes the current time");
    SimSummary summary;
    const double total_rate = static_cast<double>(st.N()) * (1.0 + params.mu);
    while (true) {
        const double t_next = st.t + rng.exponential(total_rate);
        if (t_next > t_end) {
            (
                [&] {
                    if constexpr (HasBeforeEvent<Hooks>)
                        hooks.before_event(st, t_end);
                }(),
                ...);
            st.t = t_end;
            break;
        }
        (
            [&] {
                if constexpr (HasBeforeEvent<Hooks>)
                    hooks.before_event(st, t_next);
            }(),
            ...);
        st.t = t_next;
        [[maybe_unused]] const EventRecord rec = apply_event_at(st, params, rng, &summary);
        (
            [&] {
                if constexpr (HasAfterEvent<Hooks>)
                    hooks.after_event(st, rec);
            }(),
            ...);
        bool stop = false;
        (
            [&] {
                if constexpr (HasShouldStop<Hooks>)
                    stop = hooks.should_stop(st) || stop;
            }(),
            ...);
        if (stop) {
            summary.stopped_early = true;
            return summary;
        }
    }
    (
        [&] {
            if constexpr (HasFinish<Hooks>)
                hooks.finish(st);
        }(),
        ...);
    return summary;
}

/// Type counts on a fixed time grid: rows (t, j, X_j) for occupied types.
class SnapshotRecorder {
  public:
    struct Row {
        double t;
        std::int32_t j;
        std::int64_t count;
    };

    explicit SnapshotRecorder(double dt, double start = 0.0) : dt_(dt), start_(start), next_(start) {
        if (!(dt > 0.0))
            throw ArgumentError("snapshot interval must be positive");
    }

    // Grid times in [state.t, t_next) see the current state.
    void before_event(const PopulationState& st, double t_next) {
        while (next_ < t_next)
            record(st);
    }

    // A grid point exactly at the end of the run.
    void finish(const PopulationState& st) {
        if (next_ <= st.t)
            record(st);
    }

    const std::vector<Row>& rows() const noexcept { return rows_; }

  private:
    void record(const PopulationState& st) {
        for (std::int32_t j = st.jmin(); j <= st.jmax(); ++j)
            if (st.count(j) > 0)
                rows_.push_back({next_, j, st.count(j)});
        ++index_;
        next_ = start_ + dt_ * static_cast<double>(index_);
    }

    double dt_;
    double start_;
    double next_;
    std::uint64_t index_ = 0;
    std::vector<Row> rows_;
};

/// First-passage times: tau_j is the first time X_{j-1} reaches ceil(s/mu).
/// Also keeps M at each tau_j, which the front constants need.
class TauTracker {
  public:
    struct Entry {
        std::int32_t j;
        double tau;
        double mean_at_tau;
    };

    TauTracker(double s, double mu) {
        if (!(mu > 0.0) || !(s > 0.0))
            throw ArgumentError("TauTracker needs positive s and mu");
        threshold_ = static_cast<std::int64_t>(std::ceil(s / mu));
    }

    std::int64_t threshold() const noexcept { return threshold_; }

    /// Registers crossings already present in the initial state.
    void start(const PopulationState& st) {
        for (std::int32_t j = st.jmin(); j <= st.jmax(); ++j)
            check(st, j);
    }

    void after_event(const PopulationState& st, const EventRecord& rec) { check(st, rec.new_type); }

    const std::vector<Entry>& entries() const noexcept { return entries_; }

    /// tau_j if recorded.
    const Entry* find(std::int32_t j) const {
        for (const auto& e : entries_)
            if (e.j == j)
                return &e;
        return nullptr;
    }

  private:
    void check(const PopulationState& st, std::int32_t type) {
        const std::int32_t j = type + 1;
        if (st.count(type) < threshold_)
            return;
        if (static_cast<std::size_t>(j) >= seen_.size())
            seen_.resize(static_cast<std::size_t>(j) + 1, 0);
        if (seen_[static_cast<std::size_t>(j)])
            return;
        seen_[static_cast<std::size_t>(j)] = 1;
        entries_.push_back({j, st.t, st.mean_type()});
    }

    std::int64_t threshold_ = 1;
    std::vector<char> seen_;
    std::vector<Entry> entries_;
};

} // namespace bsgen
