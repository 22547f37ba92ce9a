#include <bsgen/rng.hpp>
#include <bsgen/stats.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace bsgen;

TEST(Rng, SeedDerivationIsStableAndDistinct) {
    // Frozen values guard against accidental changes to the derivation.
    EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
    EXPECT_EQ(derive_seed(1, 0), derive_seed(1, 0));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i)
        seen.insert(derive_seed(42, i));
    EXPECT_EQ(seen.size(), 10000u);
}

TEST(Rng, UniformIndexIsUnbiased) {
    RandomStream rng(5);
    std::vector<double> counts(7, 0.0);
    for (int i = 0; i < 70000; ++i)
        counts[rng.uniform_index(7)] += 1;
    const std::vector<double> probs(7, 1.0 / 7);
    EXPECT_GT(stats::chi_square_gof(counts, probs).p_value, 1e-3);
}

TEST(Stats, TotalVariation) {
    const std::vector<double> p{0.5, 0.5, 0.0}, q{0.25, 0.25, 0.5};
    EXPECT_DOUBLE_EQ(stats::total_variation(p, q), 0.5);
    EXPECT_DOUBLE_EQ(stats::total_variation(p, p), 0.0);
    EXPECT_THROW(stats::total_variation(p, std::vector<double>{1.0}), ArgumentError);
}

TEST(Stats, KolmogorovTail) {
    // Reference values of the Kolmogorov distribution.
    EXPECT_NEAR(stats::kolmogorov_survival(1.0), 0.26999967, 1e-7);
    EXPECT_NEAR(stats::kolmogorov_survival(1.36), 0.0494, 1e-3);
    EXPECT_NEAR(stats::kolmogorov_survival(0.5), 0.96394524, 1e-7);
    EXPECT_EQ(stats::kolmogorov_survival(0.0), 1.0);
}

TEST(Stats, KsAcceptsCorrectLawAndRejectsWrongOne) {
    RandomStream rng(6);
    std::vector<double> x;
    for (int i = 0; i < 5000; ++i)
        x.push_back(rng.exponential(2.0));
    EXPECT_GT(stats::ks_test(x, [](double v) { return 1 - std::exp(-2 * v); }).p_value, 1e-3);
    EXPECT_LT(stats::ks_test(x, [](double v) { return 1 - std::exp(-2.3 * v); }).p_value, 1e-3);

    std::vector<double> y;
    for (int i = 0; i < 5000; ++i)
        y.push_back(rng.exponential(2.0));
    EXPECT_GT(stats::ks_test_2(x, y).p_value, 1e-3);
}

TEST(Stats, ChiSquare) {
    const std::vector<double> obs{50, 30, 20}, probs{0.5, 0.3, 0.2};
    const auto r = stats::chi_square_gof(obs, probs);
    EXPECT_DOUBLE_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.dof, 2);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
    // chi2 with 1 dof: statistic 3.841459 has tail 0.05
    const std::vector<double> obs2{60, 40}, probs2{0.5, 0.5};
    EXPECT_NEAR(stats::chi_square_gof(obs2, probs2).p_value, 0.0455003, 1e-6);
}

TEST(Stats, MeanSeQuantileFit) {
    const std::vector<double> x{1, 2, 3, 4};
    const auto m = stats::mean_se(x);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_NEAR(m.sd, std::sqrt(5.0 / 3.0), 1e-14);
    EXPECT_NEAR(m.se, std::sqrt(5.0 / 12.0), 1e-14);
    EXPECT_DOUBLE_EQ(stats::quantile(x, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(stats::quantile(x, 1.0), 4.0);

    const std::vector<double> t{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
    const auto f = stats::linear_fit(t, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.slope_se, 0.0, 1e-12);
}

TEST(Stats, NullTvShrinksWithSampleSize) {
    RandomStream rng(7);
    const std::vector<double> ref{0.1, 0.2, 0.3, 0.4};
    const auto small = stats::mean_se(stats::null_tv(ref, 100, 400, rng));
    const auto large = stats::mean_se(stats::null_tv(ref, 10000, 400, rng));
    EXPECT_GT(small.mean, 5 * large.mean);
}
