#include <gtest/gtest.h>

#include <sstream>

#include "lasenn/toymodel.hpp"

using namespace lasenn::toy;
using lasenn::ArgumentError;

TEST(ToyCs, PiecewiseLinear) {
    EXPECT_DOUBLE_EQ(c_s(0.4, 0.4, 0.02), 0.5);
    EXPECT_NEAR(c_s(0.42, 0.4, 0.02), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(c_s(0.36, 0.4, 0.02), 0.0);
    EXPECT_DOUBLE_EQ(c_s(0.9, 0.4, 0.02), 1.0);
    double prev = 0.0;
    for (double x = 0.0; x <= 1.0; x += 0.001) {
        const double v = c_s(x, 0.5, 0.05);
        EXPECT_GE(v, prev);
        prev = v;
    }
    EXPECT_THROW(c_s(0.5, 0.5, 0.0), ArgumentError);
}

TEST(ToyCnn, ReadsDistributionAtNeighbor) {
    const std::vector<Point> pts{{0.3, false}, {0.8, true}};
    EXPECT_NEAR(c_nn(0.35, Distribution::SkewedTriangular, pts), 0.7, 1e-15);
    EXPECT_EQ(c_nn(0.35, Distribution::Uniform, pts), 0.5);
    EXPECT_EQ(nearest_point(0.8, pts), 1u);
    const std::vector<Point> even{{0.75, true}, {0.25, false}};
    EXPECT_EQ(nearest_point(0.5, even), 1u); // equidistant: smaller position
    EXPECT_THROW(nearest_point(0.5, std::vector<Point>{}), ArgumentError);
}

TEST(ToyCla, Combination) {
    const std::vector<Point> pts{{0.3, false}};
    // c_s = 0.5 at the center, c_nn = 0.7: 0.75 * 0.5 + 0.25 * 0.7 = 0.55.
    EXPECT_NEAR(c_la(0.5, 0.5, 0.02, Distribution::SkewedTriangular, pts, 0.75), 0.55, 1e-15);
    for (double x : {0.1, 0.49, 0.5, 0.51, 0.9})
        EXPECT_EQ(c_la(x, 0.5, 0.02, Distribution::SkewedTriangular, pts, 1.0), c_s(x, 0.5, 0.02));
    // Outside the linear regime the neighbor cannot flip the decision when w_q > 0.5.
    for (double x : {0.1, 0.45, 0.55, 0.9}) {
        const bool s = c_s(x, 0.5, 0.02) > 0.5;
        for (double nb : {0.01, 0.99}) {
            const std::vector<Point> one{{nb, false}};
            EXPECT_EQ(c_la(x, 0.5, 0.02, Distribution::SkewedTriangular, one, 0.6) > 0.5, s);
        }
    }
}

TEST(ToyEstimate, AnalyticAndDeterministic) {
    ToyModelConfig cfg;
    cfg.c = 0.1;
    cfg.n_trials = 20000;
    cfg.seed = 3;
    const auto a = estimate_nn_blue_prob(cfg), b = estimate_nn_blue_prob(cfg);
    EXPECT_DOUBLE_EQ(a.analytic, 0.6);
    EXPECT_EQ(a.mc_estimate, b.mc_estimate);
    EXPECT_LE(std::abs(a.mc_estimate - a.analytic), 3.0 * a.mc_stderr);
    EXPECT_GT(a.conditioned_trials, 19000u);
}

TEST(ToyEstimate, ValidationAndNoHits) {
    ToyModelConfig cfg;
    cfg.c = 0.48; // query at 0.02, window leaves (0, 1)
    EXPECT_THROW(estimate_nn_blue_prob(cfg), ArgumentError);
    cfg = ToyModelConfig{};
    cfg.w_q = 0.5;
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg = ToyModelConfig{};
    cfg.n = 1;
    cfg.a = 1e-7;
    cfg.n_trials = 50;
    EXPECT_THROW(estimate_nn_blue_prob(cfg), ArgumentError);
}

TEST(ToyDrift, TwoPointCase) {
    const std::vector<Point> pts{{0.1, true}, {0.9, false}};
    EXPECT_DOUBLE_EQ(optimal_threshold(pts), 0.5);
    const std::vector<Point> all_blue{{0.2, true}, {0.7, true}};
    EXPECT_DOUBLE_EQ(optimal_threshold(all_blue), 1.0);
}

TEST(ToyDrift, ShrinksWithN) {
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 31; ++s) seeds.push_back(s);
    const std::vector<std::size_t> ns{100, 10000};
    const auto rows = boundary_drift(Distribution::SkewedTriangular, ns, seeds);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_LT(rows[1].median_abs_offset, rows[0].median_abs_offset);
    std::ostringstream out;
    write_drift_csv(out, rows);
    EXPECT_EQ(out.str().rfind("n,seeds,median_abs_offset\n100,31,", 0), 0u);
}

TEST(ToyMedian, EvenAndOdd) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_THROW(median({}), ArgumentError);
}
