#pragma once

#include <bsgen/error.hpp>
#include <bsgen/front.hpp>
#include <bsgen/popsim.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace bsgen {

/// State of one type after an event: X_{j-1}, the tracked count, the exact
/// type sum (M = type_sum / N) and the total fitness W (0 means N).
struct TypeStep {
    double t = 0;
    std::int64_t x_prev = 0;
    std::int64_t x = 0;
    std::int64_t type_sum = 0;
    double w = 0;
};

/// Piecewise-constant path of (X_{j-1}, X_j, M) from the moment start() is
/// called until finish().
class TypeTrackRecorder {
  public:
    explicit TypeTrackRecorder(std::int32_t j) : j_(j) {
        if (j < 0)
            throw ArgumentError("type must be non-negative");
    }

    void start(const PopulationState& st) {
        steps_.clear();
        push(st);
        started_ = true;
    }

    void after_event(const PopulationState& st, const EventRecord&) {
        if (!started_)
            return;
        const auto& last = steps_.back();
        if (last.type_sum != st.type_sum() || last.x != st.count(j_) || last.x_prev != st.count(j_ - 1) ||
            (st.clamped() || last.w != static_cast<double>(st.N())))
            push(st);
    }

    void finish(const PopulationState& st) { t_end_ = st.t; }

    std::int32_t j() const noexcept { return j_; }
    double t_end() const noexcept { return t_end_; }
    const std::vector<TypeStep>& steps() const noexcept { return steps_; }

  private:
    void push(const PopulationState& st) {
        steps_.push_back({st.t, st.count(j_ - 1), st.count(j_), st.type_sum(), st.total_fitness()});
    }

    std::int32_t j_;
    bool started_ = false;
    double t_end_ = 0;
    std::vector<TypeStep> steps_;
};

enum class FeedKind : std::uint8_t { immigrant, pure_birth, pure_death, birth_death };

/// An event changing the early type-j family X'. Individuals are population
/// slots: `victim` is the slot that dies (or mutates), `parent` the slot whose
/// offspring takes it over.
struct FeedEvent {
    double t = 0;
    FeedKind kind = FeedKind::immigrant;
    std::int32_t parent = -1;
    std::int32_t victim = -1;
};

/// Recorded history of X'_j: type j individuals descended from j-th mutations
/// in (tau_j, xi_j], between tau_j and tau_{j+1}. `env` rows hold X' in the
/// `x` field; every row is the state just after the event at its time.
struct EarlyFamilyFeed {
    std::int32_t j = 0;
    std::int64_t N = 0;
    double s = 0;
    double mu = 0;
    FrontConstants front;
    double t_end = 0;         ///< tau_{j+1} if reached, else the end of the run
    bool reached_next = false;
    bool started = false;
    std::vector<TypeStep> env;
    std::vector<FeedEvent> events;

    /// Environment in force just before absolute time t.
    const TypeStep& before(double t) const {
        auto it = std::lower_bound(env.begin(), env.end(), t, [](const TypeStep& r, double v) { return r.t < v; });
        if (it == env.begin())
            throw ArgumentError("feed queried before tau_j");
        return *(it - 1);
    }

    /// Environment at absolute time t (after any event at t).
    const TypeStep& at(double t) const {
        auto it = std::upper_bound(env.begin(), env.end(), t, [](double v, const TypeStep& r) { return v < r.t; });
        if (it == env.begin())
            throw ArgumentError("feed queried before tau_j");
        return *(it - 1);
    }
};

/// popsim hook producing an EarlyFamilyFeed. Waits for tau_j (X_{j-1} first
/// reaching ceil(s/mu)), records until tau_{j+1}, then asks the run to stop.
class EarlyFamilyRecorder {
  public:
    EarlyFamilyRecorder(std::int32_t j, const ModelParams& p, double b) : b_(b) {
        if (j < 1)
            throw ArgumentError("early family feeds need j >= 1");
        feed_.j = j;
        feed_.N = p.N;
        feed_.s = p.s;
        feed_.mu = p.mu;
        sc_ = scaling_constants(p.N, p.mu, p.s);
        threshold_ = static_cast<std::int64_t>(std::ceil(p.s / p.mu));
        member_.assign(static_cast<std::size_t>(p.N), 0);
    }

    void start(const PopulationState& st) { maybe_begin(st); }

    void after_event(const PopulationState& st, const EventRecord& rec) {
        if (done_)
            return;
        if (!feed_.started) {
            maybe_begin(st);
            return;
        }
        const std::int32_t j = feed_.j;
        if (st.count(j) >= threshold_) {
            feed_.t_end = st.t;
            feed_.reached_next = true;
            done_ = true;
            return;
        }
        const auto v = static_cast<std::size_t>(rec.victim);
        if (rec.kind == EventKind::mutation) {
            if (member_[v]) {
                member_[v] = 0;
                --count_;
                feed_.events.push_back({st.t, FeedKind::pure_death, -1, rec.victim});
            } else if (rec.new_type == j && st.t <= feed_.front.xi) {
                member_[v] = 1;
                ++count_;
                feed_.events.push_back({st.t, FeedKind::immigrant, -1, rec.victim});
            }
        } else {
            const bool pin = member_[static_cast<std::size_t>(rec.parent)] != 0;
            const bool vin = member_[v] != 0;
            if (pin && !vin) {
                member_[v] = 1;
                ++count_;
                feed_.events.push_back({st.t, FeedKind::pure_birth, rec.parent, rec.victim});
            } else if (!pin && vin) {
                member_[v] = 0;
                --count_;
                feed_.events.push_back({st.t, FeedKind::pure_death, rec.parent, rec.victim});
            } else if (pin && vin) {
                feed_.events.push_back({st.t, FeedKind::birth_death, rec.parent, rec.victim});
            }
        }
        const auto& last = feed_.env.back();
        if (last.type_sum != st.type_sum() || last.x != count_ || last.x_prev != st.count(j - 1))
            feed_.env.push_back({st.t, st.count(j - 1), count_, st.type_sum()});
    }

    bool should_stop(const PopulationState&) const { return done_; }

    void finish(const PopulationState& st) {
        if (!done_) {
            feed_.t_end = st.t;
            done_ = true;
        }
    }

    const EarlyFamilyFeed& feed() const noexcept { return feed_; }
    EarlyFamilyFeed take() { return std::move(feed_); }

  private:
    void maybe_begin(const PopulationState& st) {
        if (feed_.started || st.count(feed_.j - 1) < threshold_)
            return;
        feed_.started = true;
        feed_.front = front_constants_at(feed_.j, st.t, st.mean_type(), sc_, feed_.s, b_);
        feed_.env.push_back({st.t, st.count(feed_.j - 1), 0, st.type_sum()});
    }

    double b_;
    ScaleConstants sc_;
    std::int64_t threshold_ = 1;
    EarlyFamilyFeed feed_;
    std::vector<char> member_;
    std::int64_t count_ = 0;
    bool done_ = false;
};

} // namespace bsgen
