#include "kneeae/metrics.hpp"
#include "kneeae/rng.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace kneeae;

TEST(Confusion, PerfectPrediction) {
    const ConfusionMatrix cm{5, 0, 7, 0};
    EXPECT_EQ(error_rate(cm), 0.0);
    EXPECT_EQ(f_beta(cm), 1.0);
    EXPECT_EQ(mcc(cm), 1.0);
}

TEST(Confusion, MajorityPredictor) {
    std::vector<int> y(546, 1);
    std::fill(y.begin(), y.begin() + 249, -1);
    const std::vector<double> s(546, 1.0);
    const auto cm = confusion(s, y);
    EXPECT_EQ(cm.tp, 297);
    EXPECT_EQ(cm.fp, 249);
    EXPECT_NEAR(error_rate(cm), 0.456, 0.0005);
    EXPECT_EQ(mcc(cm), 0.0);
}

TEST(Confusion, HandComputedFHalf) {
    const ConfusionMatrix cm{2, 1, 1, 0};
    EXPECT_NEAR(precision(cm), 2.0 / 3.0, 1e-15);
    EXPECT_EQ(recall(cm), 1.0);
    EXPECT_NEAR(f_beta(cm, 0.5), 1.25 * (2.0 / 3.0) / (0.25 * (2.0 / 3.0) + 1.0), 1e-15);
    EXPECT_NEAR(f_beta(cm, 0.5), 0.714, 0.001);
}

TEST(Confusion, DegenerateCases) {
    EXPECT_EQ(f_beta(ConfusionMatrix{0, 0, 4, 3}), 0.0);
    EXPECT_EQ(mcc(ConfusionMatrix{0, 0, 4, 3}), 0.0);
    try {
        error_rate(ConfusionMatrix{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_evaluation);
    }
    EXPECT_THROW(mcc(ConfusionMatrix{}), Error);
}

TEST(Confusion, MccSymmetricFHalfNot) {
    const ConfusionMatrix cm{10, 3, 20, 7};
    const ConfusionMatrix swapped{20, 7, 10, 3};  // classes and predictions swapped
    EXPECT_NEAR(mcc(cm), mcc(swapped), 1e-15);
    EXPECT_GT(std::abs(f_beta(cm) - f_beta(swapped)), 0.01);
}

TEST(Confusion, ThresholdIsStrict) {
    const std::vector<double> s{0.5, 0.6};
    const std::vector<int> y{-1, 1};
    const auto cm = confusion(s, y, 0.5);
    EXPECT_EQ(cm.tn, 1);
    EXPECT_EQ(cm.tp, 1);
}

TEST(Roc, HandExamples) {
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{-1, -1, 1, 1}).auc, 0.75);
    EXPECT_EQ(roc_auc(std::vector<double>{0, 1, 2, 3}, std::vector<int>{-1, -1, 1, 1}).auc, 1.0);
    EXPECT_EQ(roc_auc(std::vector<double>(6, 2.0), std::vector<int>{-1, 1, 1, -1, 1, 1}).auc, 0.5);
    try {
        roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::undefined_auc);
    }
}

TEST(Roc, MatchesMannWhitneyWithTies) {
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(400);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const int levels = 1 + static_cast<int>(rng.below(12));
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial % 2 ? static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) : rng.normal();
            y[i] = rng.uniform() < 0.45 ? 1 : -1;
        }
        y[0] = 1;
        y[1] = -1;
        EXPECT_NEAR(roc_auc(s, y).auc, oracle::mann_whitney_auc(s, y), 1e-12);
    }
}

TEST(Roc, CurveShapeAndMonotoneInvariance) {
    Rng rng(2);
    std::vector<double> s(200), t(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        y[i] = i % 3 ? 1 : -1;
        s[i] = rng.normal() + 0.5 * y[i];
        t[i] = std::exp(3.0 * s[i]) - 4.0;
    }
    const auto roc = roc_auc(s, y);
    EXPECT_EQ(roc.fpr.front(), 0.0);
    EXPECT_EQ(roc.tpr.front(), 0.0);
    EXPECT_EQ(roc.fpr.back(), 1.0);
    EXPECT_EQ(roc.tpr.back(), 1.0);
    for (std::size_t i = 1; i < roc.fpr.size(); ++i) {
        EXPECT_GE(roc.fpr[i], roc.fpr[i - 1]);
        EXPECT_GE(roc.tpr[i], roc.tpr[i - 1]);
    }
    EXPECT_EQ(roc_auc(t, y).auc, roc.auc);
    std::ostringstream os;
    write_roc_csv(os, roc);
    EXPECT_EQ(os.str().rfind("threshold,fpr,tpr\ninf,0,0\n", 0), 0u);
}

TEST(SScore, TableValues) {
    EXPECT_NEAR(s_score(0.705, 0.147, 0.853), 0.804, 0.001);
    EXPECT_NEAR(s_score(0.501, 0.249, 0.723), 0.658, 0.001);
    EXPECT_EQ(s_score(1.0, 0.0, 1.0), 1.0);
}

TEST(EvaluateScores, Consistent) {
    const std::vector<double> s{-2, -1, 0.5, 1, -0.2, 3};
    const std::vector<int> y{-1, -1, 1, 1, 1, -1};
    const auto m = evaluate_scores(s, y, 0.0);
    const auto cm = confusion(s, y, 0.0);
    EXPECT_EQ(m.er, error_rate(cm));
    EXPECT_EQ(m.mcc, mcc(cm));
    EXPECT_EQ(m.s, s_score(m.mcc, m.er, m.f05));
    EXPECT_DOUBLE_EQ(m.auc, oracle::mann_whitney_auc(s, y));
}
