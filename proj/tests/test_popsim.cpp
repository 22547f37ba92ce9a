#include <bsgen/popsim.hpp>
#include <bsgen/scaling.hpp>
#include <bsgen/stats.hpp>

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <vector>

using namespace bsgen;

namespace {

ModelParams params(std::int64_t N, double mu, double s, std::uint64_t seed = 1) {
    ModelParams p;
    p.N = N;
    p.mu = mu;
    p.s = s;
    p.seed = seed;
    return p;
}

// Absorption probabilities of a finite birth-death chain on {0..N} with
// P(k -> k+1) = up[k], P(k -> k-1) = down[k], and the rest self-loops,
// computed by Gaussian elimination on h(k) = P(hit N before 0 | k).
std::vector<double> absorption_at_top(const std::vector<double>& up, const std::vector<double>& down) {
    const std::size_t n = up.size() - 1;
    std::vector<std::vector<double>> A(n + 1, std::vector<double>(n + 2, 0.0));
    A[0][0] = 1.0;
    A[n][n] = 1.0;
    A[n][n + 1] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        A[k][k] = up[k] + down[k];
        A[k][k + 1] = -up[k];
        A[k][k - 1] = -down[k];
    }
    for (std::size_t c = 0; c <= n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r <= n; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c]))
                piv = r;
        std::swap(A[c], A[piv]);
        for (std::size_t r = 0; r <= n; ++r) {
            if (r == c || A[r][c] == 0.0)
                continue;
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k <= n + 1; ++k)
                A[r][k] -= f * A[c][k];
        }
    }
    std::vector<double> h(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
        h[k] = A[k][n + 1] / A[k][k];
    return h;
}

struct InvariantHook {
    std::int64_t N;
    std::uint64_t checked = 0;
    void after_event(const PopulationState& st, const EventRecord&) {
        std::int64_t total = 0;
        for (auto c : st.counts())
            total += c;
        ASSERT_EQ(total, N);
        if (++checked % 997 == 0)
            st.check_invariants();
    }
};

} // namespace

TEST(Popsim, InitialState) {
    const auto st = init_population(params(100, 1e-3, 0.05));
    EXPECT_EQ(st.count(0), 100);
    EXPECT_EQ(st.mean_type(), 0.0);
    EXPECT_EQ(st.total_fitness(), 100.0);
    EXPECT_EQ(st.jmin(), 0);
    EXPECT_EQ(st.jmax(), 0);
    st.check_invariants();
    EXPECT_EQ(init_population(params(2, 1e-3, 0.05)).count(0), 2);
}

TEST(Popsim, Validation) {
    EXPECT_THROW(init_population(params(1, 1e-3, 0.05)), ConfigError);
    EXPECT_THROW(init_population(params(10, -1.0, 0.05)), ConfigError);
    auto p = params(10, 1e-3, 0.05);
    p.T = 0;
    EXPECT_THROW(init_population(p), ConfigError);
}

TEST(Popsim, DeathBirthFromMonomorphicStateChangesNothing) {
    const auto p = params(50, 0.0, 0.05);
    auto st = init_population(p);
    RandomStream rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto rec = step_event(st, p, rng);
        ASSERT_EQ(rec.kind, EventKind::death_birth);
        ASSERT_EQ(rec.new_type, 0);
    }
    EXPECT_EQ(st.count(0), 50);
}

TEST(Popsim, SingleMutation) {
    const auto p = params(10, 1e12, 0.05);
    auto st = init_population(p);
    RandomStream rng(4);
    const auto rec = step_event(st, p, rng);
    ASSERT_EQ(rec.kind, EventKind::mutation);
    EXPECT_EQ(st.count(0), 9);
    EXPECT_EQ(st.count(1), 1);
    EXPECT_DOUBLE_EQ(st.mean_type(), 0.1);
    EXPECT_EQ(st.type_of(rec.victim), 1);
}

TEST(Popsim, InvariantsAlongLongRun) {
    const auto p = params(200, 5e-3, 0.1, 5);
    auto st = init_population(p);
    RandomStream rng(5);
    InvariantHook hook{p.N};
    const auto summary = run_until(st, p, 1500.0, rng, hook);
    EXPECT_GT(summary.events, 200000u);
    EXPECT_GT(summary.refreshes, 1u);
    EXPECT_LT(summary.max_mean_drift, 1e-9);
    EXPECT_LT(summary.max_fitness_drift, 1e-9);
    EXPECT_GT(st.jmax(), 3);
    st.check_invariants();
}

TEST(Popsim, RunUntilCurrentTimeDoesNothing) {
    const auto p = params(20, 1e-2, 0.1);
    auto st = init_population(p);
    RandomStream rng(6);
    const auto summary = run_until(st, p, 0.0, rng);
    EXPECT_EQ(summary.events, 0u);
    EXPECT_EQ(st.t, 0.0);
    EXPECT_THROW(run_until(st, p, -1.0, rng), ArgumentError);
}

TEST(Popsim, Deterministic) {
    const auto p = params(100, 1e-2, 0.1);
    auto a = init_population(p), b = init_population(p);
    RandomStream ra(77), rb(77);
    for (int i = 0; i < 20000; ++i) {
        const auto x = step_event(a, p, ra);
        const auto y = step_event(b, p, rb);
        ASSERT_EQ(x.time, y.time);
        ASSERT_EQ(x.victim, y.victim);
        ASSERT_EQ(x.parent, y.parent);
        ASSERT_EQ(x.kind, y.kind);
    }
}

TEST(Popsim, NeutralParentChoiceFollowsFrequencies) {
    PopulationState st(100);
    st.set_selection(0.0);
    for (std::int32_t i = 0; i < 30; ++i)
        st.retype(i, 1);
    for (std::int32_t i = 30; i < 40; ++i)
        st.retype(i, 2);
    for (std::int32_t i = 40; i < 45; ++i)
        st.retype(i, 4);
    RandomStream rng(8);
    std::vector<double> counts(5, 0.0);
    for (int i = 0; i < 100000; ++i)
        counts[static_cast<std::size_t>(detail::draw_parent_type(st, rng))] += 1;
    const std::vector<double> probs{0.55, 0.30, 0.10, 0.0, 0.05};
    EXPECT_EQ(counts[3], 0.0);
    const std::vector<double> c{counts[0], counts[1], counts[2], counts[4]};
    const std::vector<double> pr{0.55, 0.30, 0.10, 0.05};
    EXPECT_GT(stats::chi_square_gof(c, pr).p_value, 1e-3);
}

TEST(Popsim, SelectedParentChoiceFollowsFitness) {
    PopulationState st(100);
    st.set_selection(0.2);
    for (std::int32_t i = 0; i < 40; ++i)
        st.retype(i, 2);
    // M = 0.8; fitness 0.84 and 1.24; total 60 * 0.84 + 40 * 1.24 = 100.
    EXPECT_NEAR(st.total_fitness_exact(), 100.0, 1e-12);
    RandomStream rng(9);
    std::vector<double> counts(2, 0.0);
    for (int i = 0; i < 100000; ++i)
        counts[st.type_of(st.member(detail::draw_parent_type(st, rng), 0)) == 2] += 1;
    const std::vector<double> probs{0.504, 0.496};
    EXPECT_GT(stats::chi_square_gof(counts, probs).p_value, 1e-3);
}

TEST(Popsim, ClampedFitness) {
    PopulationState st(10);
    st.set_selection(0.5);
    for (std::int32_t i = 1; i < 10; ++i)
        st.retype(i, 10);
    // M = 9: type 0 has 1 + 0.5 * (-9) < 0.
    EXPECT_TRUE(st.clamped());
    EXPECT_NEAR(st.total_fitness(), 9 * 1.5, 1e-12);
    RandomStream rng(10);
    for (int i = 0; i < 1000; ++i)
        ASSERT_EQ(detail::draw_parent_type(st, rng), 10);
}

TEST(Popsim, NeutralFixationMatchesMarkovChain) {
    const std::int64_t N = 4;
    std::vector<double> up(N + 1, 0.0), down(N + 1, 0.0);
    for (std::int64_t k = 1; k < N; ++k) {
        // Victim outside the tagged family and parent inside it, or the reverse.
        up[k] = static_cast<double>(N - k) / N * static_cast<double>(k) / N;
        down[k] = static_cast<double>(k) / N * static_cast<double>(N - k) / N;
    }
    const double oracle = absorption_at_top(up, down)[1];
    EXPECT_NEAR(oracle, 0.25, 1e-12);

    const auto p = params(N, 0.0, 0.0);
    const std::size_t reps = 40000;
    double fixed = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        auto st = init_population(p);
        st.retype(0, 1);
        auto rng = RandomStream::for_replicate(11, r);
        while (st.count(1) != 0 && st.count(1) != N)
            step_event(st, p, rng);
        fixed += st.count(1) == N;
    }
    const double freq = fixed / reps;
    const double se = std::sqrt(oracle * (1 - oracle) / reps);
    EXPECT_LT(std::abs(freq - oracle), 3 * se);
}

TEST(Popsim, SnapshotsOnGrid) {
    const auto p = params(30, 1e-2, 0.1);
    auto st = init_population(p);
    RandomStream rng(12);
    SnapshotRecorder snaps(0.5);
    run_until(st, p, 10.0, rng, snaps);
    std::vector<double> times;
    for (const auto& r : snaps.rows())
        if (times.empty() || times.back() != r.t)
            times.push_back(r.t);
    ASSERT_EQ(times.size(), 21u);
    for (std::size_t i = 0; i < times.size(); ++i)
        EXPECT_DOUBLE_EQ(times[i], 0.5 * static_cast<double>(i));
    // Each snapshot sums to N.
    std::int64_t total = 0;
    for (const auto& r : snaps.rows())
        if (r.t == 0.0)
            total += r.count;
    EXPECT_EQ(total, 30);
}

TEST(Popsim, TauRecords) {
    const auto p = params(1000, 1e-3, 0.5);
    auto st = init_population(p);
    TauTracker tau(p.s, p.mu);
    EXPECT_EQ(tau.threshold(), 500);
    tau.start(st);
    ASSERT_NE(tau.find(1), nullptr);
    EXPECT_EQ(tau.find(1)->tau, 0.0);

    struct Crossing {
        std::int64_t threshold;
        double first = -1;
        void after_event(const PopulationState& s, const EventRecord&) {
            if (first < 0 && s.count(1) >= threshold)
                first = s.t;
        }
    } crossing{500};
    RandomStream rng(13);
    run_until(st, p, 60.0, rng, tau, crossing);
    ASSERT_NE(tau.find(2), nullptr);
    EXPECT_EQ(tau.find(2)->tau, crossing.first);
    double prev = 0;
    for (const auto& e : tau.entries()) {
        EXPECT_GE(e.tau, prev);
        prev = e.tau;
    }
}

TEST(Popsim, DeskScaleSmoke) {
    const auto p = params(10000, 1e-4, 0.05);
    const auto sc = scaling_constants(p.N, p.mu, p.s);
    auto st = init_population(p);
    RandomStream rng(14);
    SnapshotRecorder snaps(sc.a_N / 50);
    TauTracker tau(p.s, p.mu);
    tau.start(st);
    const auto start = std::chrono::steady_clock::now();
    const auto summary = run_until(st, p, 4 * sc.a_N, rng, snaps, tau);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    RecordProperty("seconds", std::to_string(secs));
    std::cout << "N=1e4 to 4 a_N: " << summary.events << " events in " << secs << " s, clamped events "
              << summary.clamped_events << ", types reached " << st.jmax() << "\n";
    EXPECT_GT(snaps.rows().size(), 200u);
    EXPECT_GE(tau.entries().size(), 3u);
    st.check_invariants();
}
