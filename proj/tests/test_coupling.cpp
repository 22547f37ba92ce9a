#include <bsgen/branching.hpp>
#include <bsgen/feed.hpp>
#include <bsgen/stats.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace bsgen;

namespace {

ModelParams desk() {
    ModelParams p;
    p.N = 5000;
    p.s = 0.05;
    p.mu = 2.5e-4;
    p.T = 4;
    return p;
}

// A feed by hand: type j = 2, tau = 0, rates chosen so that every colour
// probability is well inside [0, 1].
EarlyFamilyFeed hand_feed() {
    EarlyFamilyFeed f;
    f.j = 2;
    f.N = 100;
    f.s = 0.05;
    f.mu = 1e-3;
    f.started = true;
    f.front.j = 2;
    f.front.tau = 0.0;
    f.front.q = 1.0;
    f.front.xi = 50.0;
    f.t_end = 10.0;
    // mu X_1 = 0.05 = s, M = 1 so F_2 = 1 + s.
    f.env.push_back({0.0, 50, 0, 100});
    auto add = [&](double t, FeedKind k, int parent, int victim, std::int64_t x) {
        f.events.push_back({t, k, parent, victim});
        f.env.push_back({t, 50, x, 100});
    };
    add(1.0, FeedKind::immigrant, -1, 7, 1);
    add(2.0, FeedKind::pure_birth, 7, 8, 2);
    add(3.0, FeedKind::birth_death, 8, 8, 2);
    add(4.0, FeedKind::birth_death, 7, 8, 2);
    add(5.0, FeedKind::pure_death, 3, 7, 1);
    add(6.0, FeedKind::immigrant, -1, 9, 2);
    return f;
}

} // namespace

TEST(Coupling, NoImmigrationNoEventsStaysEmpty) {
    EarlyFamilyFeed f = hand_feed();
    f.events.clear();
    f.env.resize(1);
    f.front.xi = f.front.tau; // empty immigration window
    CouplingParams cp;
    cp.checkpoints = {1.0, 5.0, 9.0, 15.0};
    cp.horizon = 20.0;
    RandomStream rng(1);
    const auto run = run_coupling(f, cp, rng);
    EXPECT_TRUE(run.valid);
    ASSERT_EQ(run.at_checkpoints.size(), 4u);
    for (const auto& row : run.at_checkpoints) {
        EXPECT_EQ(row.x_minus, 0);
        EXPECT_EQ(row.x_plus, 0);
    }
    EXPECT_EQ(run.at_checkpoints[2].x_prime, 0);
    EXPECT_EQ(run.at_checkpoints[3].x_prime, -1); // past the feed
    EXPECT_EQ(run.events, 0u);
}

TEST(Coupling, HandFeedKeepsCorrespondence) {
    const auto f = hand_feed();
    CouplingParams cp;
    cp.record_path = true;
    cp.kappa_level = 1e9;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        RandomStream rng(seed);
        const auto run = run_coupling(f, cp, rng);
        ASSERT_TRUE(run.valid) << run.flag;
        EXPECT_EQ(run.sandwich_violations, 0u);
        EXPECT_EQ(run.correspondence_errors, 0u);
        EXPECT_GE(run.sandwich_checks, f.events.size());
        EXPECT_DOUBLE_EQ(run.kappa, 10.0);
        for (const auto& row : run.path) {
            EXPECT_LE(row.x_minus, row.x_prime);
            EXPECT_LE(row.x_prime, row.x_plus);
        }
    }
}

TEST(Coupling, CorrespondenceErrorsAreDetected) {
    auto f = hand_feed();
    f.events.push_back({7.0, FeedKind::pure_death, -1, 42}); // never in the family
    f.env.push_back({7.0, 50, 1, 100});
    RandomStream rng(2);
    CouplingParams cp;
    cp.kappa_level = 1e9;
    const auto run = run_coupling(f, cp, rng);
    EXPECT_GT(run.correspondence_errors, 0u);
}

TEST(Coupling, LowImmigrationIsFlagged) {
    auto f = hand_feed();
    for (auto& e : f.env)
        e.x_prev = 10; // mu X_1 = 0.01 < phi^-
    RandomStream rng(3);
    const auto run = run_coupling(f, CouplingParams{}, rng);
    EXPECT_FALSE(run.valid);
    EXPECT_NE(run.flag.find("phi^-"), std::string::npos);
    EXPECT_DOUBLE_EQ(run.flag_time, 1.0);
}

TEST(Coupling, RatesFollowTheBands) {
    const auto r = coupling_rates(2.0, 0.1, 1e-3, 30.0, 0.25, 1.5);
    EXPECT_DOUBLE_EQ(r.lambda_minus, 1.05);
    EXPECT_DOUBLE_EQ(r.lambda_plus, 1.35);
    EXPECT_DOUBLE_EQ(r.nu_minus, 1.001);
    EXPECT_DOUBLE_EQ(r.nu_plus, 0.9);
    EXPECT_DOUBLE_EQ(r.phi_plus.rate(0.0), 0.125);
    EXPECT_DOUBLE_EQ(r.phi_minus.rate(0.0), 0.075);
    EXPECT_EQ(r.phi_plus.rate(31.0), 0.0);
    CouplingParams bad;
    bad.delta = 1.5;
    RandomStream rng(1);
    EXPECT_THROW(run_coupling(hand_feed(), bad, rng), ConfigError);
}

TEST(Coupling, FeedCountsAddUp) {
    auto rng = RandomStream::for_replicate(4, 0);
    const auto f = record_early_family(desk(), 2, b_constant(0.01, 0.1, 4), rng);
    ASSERT_TRUE(f.started);
    EXPECT_GT(f.events.size(), 10u);
    std::int64_t x = 0;
    for (const auto& ev : f.events) {
        if (ev.kind == FeedKind::immigrant || ev.kind == FeedKind::pure_birth)
            ++x;
        else if (ev.kind == FeedKind::pure_death)
            --x;
        EXPECT_EQ(f.at(ev.t).x, x);
        EXPECT_LE(ev.t, f.front.xi + (ev.kind == FeedKind::immigrant ? 0.0 : kInf));
    }
    EXPECT_EQ(f.env.front().x_prev, 200);
    EXPECT_GE(f.front.q, 1.0);
}

TEST(Coupling, SandwichOnPopulationFeeds) {
    CouplingParams cp;
    std::size_t valid = 0, started = 0;
    for (std::size_t r = 0; r < 30; ++r) {
        auto rng = RandomStream::for_replicate(5, r);
        const auto f = record_early_family(desk(), 2, b_constant(0.01, 0.1, 4), rng);
        if (!f.started)
            continue;
        ++started;
        const auto run = run_coupling(f, cp, rng);
        EXPECT_EQ(run.sandwich_violations, 0u);
        EXPECT_EQ(run.correspondence_errors, 0u);
        valid += run.valid;
    }
    EXPECT_GE(started, 25u);
    EXPECT_GE(valid, started - 2);
}

TEST(Coupling, ReplayIsDeterministic) {
    auto rng = RandomStream::for_replicate(6, 0);
    const auto f = record_early_family(desk(), 2, b_constant(0.01, 0.1, 4), rng);
    CouplingParams cp;
    cp.record_path = true;
    RandomStream a(7), b(7);
    const auto x = run_coupling(f, cp, a);
    const auto y = run_coupling(f, cp, b);
    ASSERT_EQ(x.path.size(), y.path.size());
    for (std::size_t i = 0; i < x.path.size(); ++i) {
        EXPECT_EQ(x.path[i].t, y.path[i].t);
        EXPECT_EQ(x.path[i].x_plus, y.path[i].x_plus);
    }
}

TEST(Coupling, RedProcessMatchesItsBranchingLaw) {
    // Past kappa the red process runs alone; its law is the (phi^-, lambda^-,
    // nu^-) branching process throughout. Oracle: simulate_bd with the same
    // per-run rates.
    CouplingParams cp;
    cp.track_plus_after_kappa = false;
    const double s = desk().s;
    std::vector<std::vector<double>> red(2), oracle(2);
    for (std::size_t r = 0; r < 200; ++r) {
        auto rng = RandomStream::for_replicate(8, r);
        const auto f = record_early_family(desk(), 2, b_constant(0.01, 0.1, 4), rng);
        if (!f.started)
            continue;
        const double sq = s * f.front.q;
        cp.checkpoints = {1.0 / sq, 2.0 / sq};
        cp.horizon = 2.0 / sq + 1.0;
        const auto run = run_coupling(f, cp, rng);
        if (!run.valid)
            continue;
        BDParams bp;
        bp.lambda = run.rates.lambda_minus;
        bp.nu = run.rates.nu_minus;
        bp.immigration = run.rates.phi_minus;
        bp.z0 = 0;
        BdOptions opt;
        opt.checkpoints = cp.checkpoints;
        auto orng = RandomStream::for_replicate(9, r);
        const auto path = simulate_bd(bp, cp.horizon, orng, opt);
        for (std::size_t k = 0; k < 2; ++k) {
            red[k].push_back(static_cast<double>(run.at_checkpoints[k].x_minus));
            oracle[k].push_back(static_cast<double>(path.at_checkpoints[k]));
        }
    }
    ASSERT_GT(red[0].size(), 150u);
    ASSERT_GT(stats::mean_se(oracle[0]).mean, 0.2);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto a = stats::mean_se(red[k]);
        const auto b = stats::mean_se(oracle[k]);
        EXPECT_LT(std::abs(a.mean - b.mean), 3 * std::hypot(a.se, b.se)) << k << ": " << a.mean << " vs " << b.mean;
        auto zeros = [](const std::vector<double>& v) {
            std::vector<double> z;
            for (double x : v)
                z.push_back(x == 0.0 ? 1.0 : 0.0);
            return stats::mean_se(z);
        };
        const auto za = zeros(red[k]);
        const auto zb = zeros(oracle[k]);
        EXPECT_LT(std::abs(za.mean - zb.mean), 3 * std::hypot(za.se, zb.se)) << k;
    }
}
