#include <gtest/gtest.h>

#include "parallax/core/random.hpp"
#include "parallax/eval/metrics.hpp"

using namespace parallax;

namespace {

Tensor random_depth(Rng& rng, int h, int w, double lo = 1.0, double hi = 60.0) {
    std::vector<double> v(static_cast<size_t>(h) * w);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from({h, w}, std::move(v));
}

}  // namespace

TEST(DepthMetricsTest, PerfectPredictionGivesZerosAndOnes) {
    Rng rng(1);
    Tensor gt = random_depth(rng, 8, 10);
    DepthMetrics m = depth_metrics(gt, gt, Tensor(), 80.0, false);
    EXPECT_DOUBLE_EQ(m.abs_rel, 0.0);
    EXPECT_DOUBLE_EQ(m.sq_rel, 0.0);
    EXPECT_DOUBLE_EQ(m.rmse, 0.0);
    EXPECT_DOUBLE_EQ(m.rmse_log, 0.0);
    EXPECT_DOUBLE_EQ(m.d1, 1.0);
    EXPECT_DOUBLE_EQ(m.d2, 1.0);
    EXPECT_DOUBLE_EQ(m.d3, 1.0);
}

TEST(DepthMetricsTest, MedianScalingRemovesGlobalScaleExactly) {
    Rng rng(2);
    Tensor gt = random_depth(rng, 8, 10, 1.0, 40.0);
    Tensor pred = mul(gt, Tensor::scalar(2.0));
    DepthMetrics m = depth_metrics(pred, gt, Tensor(), 80.0, true);
    EXPECT_DOUBLE_EQ(m.abs_rel, 0.0);
    EXPECT_DOUBLE_EQ(m.rmse, 0.0);
    EXPECT_DOUBLE_EQ(m.d1, 1.0);
}

TEST(DepthMetricsTest, TenPercentOverestimateWithoutScaling) {
    Rng rng(3);
    Tensor gt = random_depth(rng, 6, 6, 2.0, 30.0);
    Tensor pred = mul(gt, Tensor::scalar(1.1));
    DepthMetrics m = depth_metrics(pred, gt, Tensor(), 80.0, false);
    EXPECT_NEAR(m.abs_rel, 0.1, 1e-12);
    EXPECT_DOUBLE_EQ(m.d1, 1.0);  // ratio 1.1 < 1.25
}

TEST(DepthMetricsTest, MedianScaleInvarianceUnderRescaling) {
    Rng rng(4);
    Tensor gt = random_depth(rng, 7, 9);
    Tensor pred = random_depth(rng, 7, 9);
    DepthMetrics base = depth_metrics(pred, gt, Tensor(), 80.0, true);
    for (double c : {2.0, 0.25}) {  // powers of two rescale exactly
        DepthMetrics m = depth_metrics(mul(pred, Tensor::scalar(c)), gt, Tensor(), 80.0, true);
        EXPECT_DOUBLE_EQ(m.abs_rel, base.abs_rel);
        EXPECT_DOUBLE_EQ(m.rmse_log, base.rmse_log);
        EXPECT_DOUBLE_EQ(m.d2, base.d2);
    }
    DepthMetrics m = depth_metrics(mul(pred, Tensor::scalar(3.7)), gt, Tensor(), 80.0, true);
    EXPECT_NEAR(m.abs_rel, base.abs_rel, 1e-12);
    EXPECT_NEAR(m.rmse, base.rmse, 1e-10);
}

TEST(DepthMetricsTest, CapAndMaskAndInvalidPixelsExcluded) {
    const int h = 2, w = 4;
    Tensor gt = Tensor::from({h, w}, {5, 10, 90, std::nan(""), 5, 5, 5, -1});
    Tensor pred = Tensor::from({h, w}, {5, 10, 1, 1, 10, 10, 10, 1});
    Tensor mask = Tensor::from({h, w}, {1, 1, 1, 1, 0, 0, 1, 1});
    // valid pixels: (0,0),(0,1) exact; (1,2) ratio 2; rest: capped(90), NaN,
    // masked, masked, gt<=0
    DepthMetrics m = depth_metrics(pred, gt, mask, 80.0, false);
    EXPECT_NEAR(m.abs_rel, (0 + 0 + 1.0) / 3.0, 1e-12);
    EXPECT_NEAR(m.d1, 2.0 / 3.0, 1e-12);

    Tensor all_bad = Tensor::from({1, 1}, {std::nan("")});
    EXPECT_THROW(depth_metrics(Tensor::from({1, 1}, {1.0}), all_bad, Tensor(), 80.0, false),
                 std::runtime_error);
}

TEST(DepthMetricsTest, DeltaOrderingInvariant) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor gt = random_depth(rng, 6, 8);
        Tensor pred = random_depth(rng, 6, 8);
        DepthMetrics m = depth_metrics(pred, gt, Tensor(), 80.0, trial % 2 == 0);
        EXPECT_LE(m.d1, m.d2);
        EXPECT_LE(m.d2, m.d3);
        EXPECT_GE(m.d1, 0.0);
        EXPECT_LE(m.d3, 1.0);
        EXPECT_GE(m.abs_rel, 0.0);
        EXPECT_GE(m.rmse, 0.0);
    }
}

TEST(DepthMetricsTest, CsvColumnOrder) {
    EXPECT_EQ(depth_metrics_csv_header(), "abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3");
    DepthMetrics m;
    m.abs_rel = 0.5;
    m.d3 = 0.25;
    const std::string row = depth_metrics_csv_row(m);
    EXPECT_EQ(row.substr(0, 4), "0.5,");
    EXPECT_EQ(row.substr(row.size() - 4), "0.25");
}

namespace {

std::vector<Pose4x4> straight_line_rel(double step) {
    std::vector<Pose4x4> rel;
    for (int i = 0; i < 4; ++i)
        rel.push_back(se3_to_matrix(SE3Params::translation(0, 0, step)));
    return rel;
}

}  // namespace

TEST(Odometry, PerfectPredictionGivesZero) {
    Rng rng(6);
    std::vector<std::vector<Pose4x4>> pred, gt;
    for (int s = 0; s < 3; ++s) {
        std::vector<Pose4x4> rel;
        for (int i = 0; i < 4; ++i) {
            SE3Params p;
            for (int j = 0; j < 3; ++j) p.v[static_cast<size_t>(j)] = rng.uniform(-0.5, 0.5);
            for (int j = 3; j < 6; ++j) p.v[static_cast<size_t>(j)] = rng.uniform(-0.1, 0.1);
            rel.push_back(se3_to_matrix(p));
        }
        pred.push_back(rel);
        gt.push_back(rel);
    }
    OdometrySummary o = odometry_ate(pred, gt);
    EXPECT_NEAR(o.mean, 0.0, 1e-12);
    EXPECT_NEAR(o.stddev, 0.0, 1e-12);
    EXPECT_EQ(o.snippets, 3);
}

TEST(Odometry, ScaleAlignmentRemovesDoubledTranslations) {
    std::vector<std::vector<Pose4x4>> gt = {straight_line_rel(1.0)};
    std::vector<std::vector<Pose4x4>> pred = {straight_line_rel(2.0)};
    OdometrySummary o = odometry_ate(pred, gt);
    EXPECT_NEAR(o.mean, 0.0, 1e-12);
}

TEST(Odometry, IdentityPredictionAgainstStraightLine) {
    // best scale is 0, so the error is the RMS of the GT positions:
    // sqrt((0+1+4+9+16)/5) = sqrt(6)
    std::vector<std::vector<Pose4x4>> gt = {straight_line_rel(1.0)};
    std::vector<std::vector<Pose4x4>> pred = {{Pose4x4::identity(), Pose4x4::identity(),
                                               Pose4x4::identity(), Pose4x4::identity()}};
    OdometrySummary o = odometry_ate(pred, gt);
    EXPECT_NEAR(o.mean, std::sqrt(6.0), 1e-12);
}

TEST(Odometry, InsufficientFramesRejected) {
    std::vector<std::vector<Pose4x4>> three = {{Pose4x4::identity(), Pose4x4::identity()}};
    EXPECT_THROW(odometry_ate(three, three), std::runtime_error);
    EXPECT_THROW(odometry_ate({}, {}), std::runtime_error);
}

TEST(CompareReport, SingleRunTable) {
    RunMetrics r;
    r.name = "baseline";
    r.depth.abs_rel = 0.12;
    Report rep = compare_report({r});
    EXPECT_NE(rep.text.find("baseline"), std::string::npos);
    EXPECT_NE(rep.text.find("abs_rel"), std::string::npos);
    EXPECT_NE(rep.csv.find("run,abs_rel"), std::string::npos);
}

TEST(CompareReport, RunsSortedByAbsRel) {
    RunMetrics a, b;
    a.name = "worse";
    a.depth.abs_rel = 0.3;
    b.name = "better";
    b.depth.abs_rel = 0.1;
    Report rep = compare_report({a, b});
    EXPECT_LT(rep.text.find("better"), rep.text.find("worse"));
}

TEST(CompareReport, MissingOdometryIsDepthOnly) {
    RunMetrics a;
    a.name = "depthonly";
    a.depth.abs_rel = 0.2;
    Report rep = compare_report({a});
    EXPECT_EQ(rep.text.find("ate"), std::string::npos);
    RunMetrics b = a;
    b.name = "withodo";
    b.odometry = OdometrySummary{0.01, 0.002, 5};
    Report rep2 = compare_report({a, b});
    EXPECT_NE(rep2.text.find("ate"), std::string::npos);
    EXPECT_NE(rep2.csv.find(",,"), std::string::npos);  // dash row for the run without
}
