#include "kneeae/experiment.hpp"
#include "kneeae/synthgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

using namespace kneeae;

namespace {

std::vector<KneeInfo> knees(int normal, int abnormal) {
    std::vector<KneeInfo> k;
    for (int i = 0; i < normal; ++i) k.push_back({"N" + std::to_string(i), Label::normal});
    for (int i = 0; i < abnormal; ++i) k.push_back({"A" + std::to_string(i), Label::abnormal});
    return k;
}

// Small corpus: 10 + 10 knees, 40 s each (two segments).
const Corpus& small_corpus() {
    static const Corpus c = [] {
        SynthSpec s;
        s.duration_s = 40.0;
        s.seed = 3;
        return make_corpus(generate(s));
    }();
    return c;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("kneeae_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Groups, ReferenceTemplate) {
    const auto k = knees(19, 21);
    CvProtocol cv;
    const auto g = make_groups(k, cv, 1);
    std::vector<int> n(5, 0), a(5, 0);
    for (std::size_t i = 0; i < k.size(); ++i) (k[i].label == Label::normal ? n : a)[static_cast<std::size_t>(g[i])]++;
    EXPECT_EQ(n, (std::vector<int>{3, 3, 3, 5, 5}));
    EXPECT_EQ(a, (std::vector<int>{5, 5, 5, 3, 3}));
}

TEST(Groups, ScaledTemplateAndErrors) {
    const auto ten = scale_template(std::vector<int>{3, 3, 3, 5, 5}, 10);
    EXPECT_EQ(std::accumulate(ten.begin(), ten.end(), 0), 10);
    EXPECT_GE(*std::min_element(ten.begin(), ten.end()), 1);
    EXPECT_GE(ten[3], ten[1]);
    EXPECT_EQ(scale_template(std::vector<int>{3, 3, 3, 5, 5}, 19), (std::vector<int>{3, 3, 3, 5, 5}));
    try {
        make_groups(knees(3, 21), CvProtocol{}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::grouping);
    }
}

TEST(Groups, SeededAndOrderFree) {
    auto k = knees(19, 21);
    const auto a = make_groups(k, CvProtocol{}, 9);
    EXPECT_EQ(a, make_groups(k, CvProtocol{}, 9));
    EXPECT_NE(a, make_groups(k, CvProtocol{}, 10));
    std::map<std::string, int> by_id;
    for (std::size_t i = 0; i < k.size(); ++i) by_id[k[i].knee_id] = a[i];
    std::reverse(k.begin(), k.end());
    const auto b = make_groups(k, CvProtocol{}, 9);
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_EQ(by_id[k[i].knee_id], b[i]);
}

TEST(Plan, KneesNeverStraddleFolds) {
    std::vector<std::string> ids;
    std::vector<int> y;
    for (int k = 0; k < 40; ++k)
        for (int j = 0; j < 1 + k % 4; ++j) {
            ids.push_back("K" + std::to_string(k));
            y.push_back(k < 19 ? -1 : 1);
        }
    CvProtocol cv;
    cv.seed = 4;
    const auto plan = make_plan(ids, y, cv);
    ASSERT_EQ(plan.repetitions(), 100);
    std::set<std::vector<int>> distinct;
    for (const auto& folds : plan.fold_of_row) {
        std::map<std::string, int> seen;
        for (std::size_t r = 0; r < ids.size(); ++r) {
            auto [it, fresh] = seen.emplace(ids[r], folds[r]);
            EXPECT_EQ(it->second, folds[r]);
        }
        distinct.insert(folds);
    }
    EXPECT_GT(distinct.size(), 90u);  // regrouped per repetition
    y[2] = 1;                          // knee K1 (rows 1 and 2) now carries both labels
    EXPECT_THROW(make_plan(ids, y, cv), Error);
}

TEST(Standardizer, SampleStdAndConstantColumns) {
    Matrix x(4, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5;
    const auto s = Standardizer::fit(x);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
    EXPECT_NEAR(s.scale[0], std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(s.scale[1], 1.0);
    const Matrix z = s.apply(x);
    EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
    EXPECT_EQ(z(0, 1), 0.0);
}

TEST(Standardizer, TestFoldUsesTrainingParameters) {
    // rows of fold 1 are shifted far away; z-scoring them with their own
    // statistics would centre them at 0
    Matrix x(20, 1);
    std::vector<int> y(20), folds(20);
    for (int i = 0; i < 20; ++i) {
        folds[static_cast<std::size_t>(i)] = i < 5 ? 1 : 0;
        y[static_cast<std::size_t>(i)] = i % 2 ? 1 : -1;
        x(i, 0) = (i < 5 ? 100.0 : 0.0) + i % 3;
    }
    const auto f = split_fold(x, y, folds, 1);
    const Standardizer own = Standardizer::fit(x.topRows(5));
    EXPECT_GT(f.test.col(0).mean(), 50.0);
    EXPECT_GT((f.test - own.apply(x.topRows(5))).cwiseAbs().maxCoeff(), 1.0);
    EXPECT_NEAR(f.train.col(0).mean(), 0.0, 1e-12);
    EXPECT_EQ(f.test_rows, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(RunCv, OracleAndNoiseFeatures) {
    Rng rng(6);
    std::vector<std::string> ids;
    std::vector<int> y;
    Matrix oracle_x(120, 1), noise_x(120, 2);
    for (int k = 0; k < 40; ++k)
        for (int j = 0; j < 3; ++j) {
            const int r = k * 3 + j;
            ids.push_back("K" + std::to_string(k));
            y.push_back(k < 19 ? -1 : 1);
            oracle_x(r, 0) = y.back() + 0.01 * rng.normal();
            noise_x(r, 0) = rng.normal();
            noise_x(r, 1) = rng.normal();
        }
    CvProtocol cv;
    cv.seed = 12;
    const auto plan = make_plan(ids, y, cv);
    const auto good = run_cv(oracle_x, plan, ClassifierKind::svm_linear, 1);
    EXPECT_LT(good.mean.er, 0.01);
    const auto bad = run_cv(noise_x, plan, ClassifierKind::svm_linear, 2);
    EXPECT_GE(bad.mean.auc, 0.43);
    EXPECT_LE(bad.mean.auc, 0.57);

    double lo = 1, hi = 0, er = 0, s = 0;
    for (const auto& m : bad.per_rep) {
        lo = std::min(lo, m.auc);
        hi = std::max(hi, m.auc);
        er += m.er;
        s += m.s;
    }
    EXPECT_GE(bad.mean.auc, lo);
    EXPECT_LE(bad.mean.auc, hi);
    EXPECT_NEAR(bad.mean.er, er / 100.0, 1e-15);
    EXPECT_NEAR(bad.mean.s, s / 100.0, 1e-15);
    EXPECT_NEAR(bad.mean.s, s_score(bad.mean.mcc, bad.mean.er, bad.mean.f05), 1e-12);
    EXPECT_EQ(bad.first_scores.size(), 120u);

    // thread count does not change anything
    const auto again = run_cv(noise_x, plan, ClassifierKind::svm_linear, 1);
    EXPECT_EQ(again.mean.auc, bad.mean.auc);
    EXPECT_EQ(again.first_scores, bad.first_scores);
}

TEST(RunCv, AllClassifiersRun) {
    Rng rng(8);
    std::vector<std::string> ids;
    std::vector<int> y;
    Matrix x(80, 3);
    for (int r = 0; r < 80; ++r) {
        ids.push_back("K" + std::to_string(r / 2));
        y.push_back(r / 2 < 19 ? -1 : 1);
        for (int c = 0; c < 3; ++c) x(r, c) = rng.normal() + (c == 0 ? y.back() : 0);
    }
    CvProtocol cv;
    cv.repetitions = 5;
    const auto plan = make_plan(ids, y, cv);
    for (auto k : all_classifier_kinds) {
        const auto res = run_cv(x, plan, k, 1);
        EXPECT_GT(res.mean.auc, 0.75) << to_string(k);
    }
}

TEST(Grids, Shapes) {
    const auto f = framelen_grid();
    ASSERT_EQ(f.size(), 21u);
    EXPECT_EQ(f.front(), 20.0);
    EXPECT_EQ(f.back(), 100.0);
    EXPECT_EQ(local_grid(49.0), (std::vector<double>{46, 47, 48, 50, 51, 52}));
    const auto nb = nbands_grid();
    EXPECT_EQ(nb.front(), 10.0);
    EXPECT_EQ(nb.back(), 75.0);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto mc = monte_carlo_grid(seed);
        ASSERT_EQ(mc.size(), 20u);
        EXPECT_TRUE(std::is_sorted(mc.begin(), mc.end()));
        EXPECT_EQ(std::set<double>(mc.begin(), mc.end()).size(), 20u);
        for (double v : mc) {
            EXPECT_TRUE((v >= 2 && v < 20) || (v > 100 && v <= 700)) << v;
            EXPECT_EQ(v, std::round(v));
        }
        EXPECT_EQ(mc, monte_carlo_grid(seed));
    }
    EXPECT_EQ(parse_sweep_kind("monte-carlo"), SweepKind::monte_carlo);
    EXPECT_EQ(parse_sweep_kind("local_search"), SweepKind::local_search);
    EXPECT_THROW(parse_sweep_kind("grid"), Error);
}

TEST(Corpus, SegmentsAndHash) {
    const auto& c = small_corpus();
    EXPECT_EQ(c.segments.size(), 40u);
    SynthSpec s;
    s.duration_s = 40.0;
    s.seed = 3;
    EXPECT_EQ(make_corpus(generate(s)).hash, c.hash);
    s.seed = 4;
    EXPECT_NE(make_corpus(generate(s)).hash, c.hash);
}

TEST(Extract, CacheRoundTrip) {
    const auto dir = scratch("cache");
    FeatureConfig cfg;
    cfg.frame_ms = 64;
    cfg.n_bands = 12;
    cfg.sets = {SetTag::M, SetTag::F};
    const FeatureCache cache(dir);
    const auto a = extract(small_corpus(), cfg, cache, 1);
    ASSERT_TRUE(std::filesystem::exists(cache.path(small_corpus().hash, cfg, SetTag::M)));
    const auto b = extract(small_corpus(), cfg, cache, 1);
    for (SetTag t : cfg.sets) {
        EXPECT_TRUE(a.sets.at(t).data == b.sets.at(t).data);
        EXPECT_EQ(a.sets.at(t).knee_ids, b.sets.at(t).knee_ids);
    }
    // a corrupt entry is rebuilt
    std::ofstream(cache.path(small_corpus().hash, cfg, SetTag::M), std::ios::trunc) << "x";
    const auto c = extract(small_corpus(), cfg, cache, 1);
    EXPECT_TRUE(c.sets.at(SetTag::M).data == a.sets.at(SetTag::M).data);
}

TEST(Extract, ResolutionFailuresSkipOnlyAffectedSets) {
    FeatureConfig cfg;
    cfg.frame_ms = 2;  // 32 samples, 17 bins
    cfg.n_bands = 20;
    cfg.sets = {SetTag::M, SetTag::F};
    const auto ex = extract(small_corpus(), cfg, {}, 1);
    EXPECT_TRUE(ex.skipped.count(SetTag::M));
    EXPECT_TRUE(ex.sets.count(SetTag::F));
}

TEST(EvaluatePoint, DeterministicReports) {
    ExperimentConfig cfg;
    cfg.cv.repetitions = 3;
    cfg.cv.seed = 5;
    cfg.features.frame_ms = 32;
    cfg.features.n_bands = 8;
    cfg.features.sets = {SetTag::M, SetTag::D};
    cfg.classifiers = {ClassifierKind::svm_linear, ClassifierKind::lda};
    const auto a = to_json(evaluate_point(small_corpus(), cfg), cfg, small_corpus().hash);
    cfg.jobs = 3;
    const auto b = to_json(evaluate_point(small_corpus(), cfg), cfg, small_corpus().hash);
    EXPECT_EQ(a.dump(), b.dump());
    ASSERT_EQ(a.at("results").size(), 4u);
    const auto& r = a.at("results")[0];
    EXPECT_EQ(r.at("set"), "M");
    EXPECT_EQ(r.at("winner").at("evaluation").at("per_repetition").size(), 3u);
}

TEST(Sweep, LocalSearchVisitsOffsetsPerSet) {
    ExperimentConfig cfg;
    cfg.cv.repetitions = 2;
    cfg.features.n_bands = 6;
    cfg.features.sets = {SetTag::L};
    SweepConfig sc;
    sc.kind = SweepKind::local_search;
    sc.center_ms = {{SetTag::L, 20.0}};
    std::vector<double> seen;
    const auto pts = run_sweep(small_corpus(), cfg, sc, {}, [&](const SweepPoint& p) { seen.push_back(p.value); });
    EXPECT_EQ(seen, (std::vector<double>{17, 18, 19, 21, 22, 23}));
    EXPECT_EQ(pts.size(), 6u);
    EXPECT_EQ(pts[0].report.features.frame_ms, 17.0);
}

TEST(Sweep, NbandsSkipsSpectrumSet) {
    ExperimentConfig cfg;
    cfg.cv.repetitions = 2;
    cfg.features.sets = {SetTag::F, SetTag::E};
    SweepConfig sc;
    sc.kind = SweepKind::nbands;
    sc.grid = {6, 9};
    const auto pts = run_sweep(small_corpus(), cfg, sc);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[1].report.features.n_bands, 9);
    EXPECT_EQ(pts[1].report.features.frame_ms, 90.0);
    EXPECT_EQ(pts[1].report.results.at(0).set, SetTag::E);
}

TEST(Sweep, LongFramesResolveTheBandBetter) {
    SynthSpec s;
    s.duration_s = 60.0;
    s.abnormal_gain_db = 4.0;
    s.seed = 11;
    const auto corpus = make_corpus(generate(s));
    CvProtocol cv;
    cv.repetitions = 10;
    cv.seed = 2;
    auto auc_at = [&](double l) {
        FeatureConfig f;
        f.frame_ms = l;
        f.sets = {SetTag::F};
        const auto fs = extract(corpus, f).sets.at(SetTag::F);
        std::vector<int> near;
        for (int v = 0; v < fs.vector_count(); ++v)
            if (std::abs(fs.vectors[static_cast<std::size_t>(v)].center_hz - 300.0) <= 50.0) near.push_back(v);
        return run_cv(fs.columns(near), plan_for(fs, cv), ClassifierKind::svm_linear, 1).mean.auc;
    };
    EXPECT_GT(auc_at(100.0), auc_at(20.0));
}
