#pragma once

// Knee-grouped cross-validation: fold template, per-repetition regrouping,
// train-fit standardisation and pooled test metrics.

#include "kneeae/classify/classifier.hpp"
#include "kneeae/common.hpp"
#include "kneeae/metrics.hpp"
#include "kneeae/parallel.hpp"
#include "kneeae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace kneeae {

struct CvProtocol {
    // Knees per group for the reference 19 normal / 21 abnormal corpus.
    std::vector<int> normal_template{3, 3, 3, 5, 5};
    std::vector<int> abnormal_template{5, 5, 5, 3, 3};
    int repetitions = 100;
    std::uint64_t seed = 0;

    int groups() const { return static_cast<int>(normal_template.size()); }
};

struct KneeInfo {
    std::string knee_id;
    Label label = Label::normal;
};

/// Scales a template to `total` knees: floors first, then one extra knee to
/// the groups with the largest fractional parts (lowest index on ties).
inline std::vector<int> scale_template(std::span<const int> tmpl, int total) {
    const double sum = static_cast<double>(std::accumulate(tmpl.begin(), tmpl.end(), 0));
    std::vector<int> out(tmpl.size());
    std::vector<std::pair<double, std::size_t>> frac;
    int used = 0;
    for (std::size_t g = 0; g < tmpl.size(); ++g) {
        const double exact = static_cast<double>(total) * tmpl[g] / sum;
        out[g] = static_cast<int>(std::floor(exact + 1e-9));
        used += out[g];
        frac.push_back({exact - out[g], g});
    }
    std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
    for (std::size_t k = 0; used < total; ++k, ++used) ++out[frac[k % frac.size()].second];
    return out;
}

/// Partitions knees into groups following the (scaled) ratio template.
/// Returns the group index of each input knee.
inline std::vector<int> make_groups(std::span<const KneeInfo> knees, const CvProtocol& cv, std::uint64_t seed) {
    std::vector<std::size_t> normal, abnormal;
    for (std::size_t i = 0; i < knees.size(); ++i)
        (knees[i].label == Label::abnormal ? abnormal : normal).push_back(i);
    // Canonical order first so the partition does not depend on input order.
    auto by_id = [&](std::size_t a, std::size_t b) { return knees[a].knee_id < knees[b].knee_id; };
    std::sort(normal.begin(), normal.end(), by_id);
    std::sort(abnormal.begin(), abnormal.end(), by_id);

    const auto n_sizes = scale_template(cv.normal_template, static_cast<int>(normal.size()));
    const auto a_sizes = scale_template(cv.abnormal_template, static_cast<int>(abnormal.size()));
    for (int g = 0; g < cv.groups(); ++g)
        if (n_sizes[static_cast<std::size_t>(g)] == 0 || a_sizes[static_cast<std::size_t>(g)] == 0)
            throw Error(Errc::grouping, std::to_string(normal.size()) + " normal and " +
                                            std::to_string(abnormal.size()) + " abnormal knees cannot fill " +
                                            std::to_string(cv.groups()) + " groups with both classes");

    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(normal));
    rng.shuffle(std::span<std::size_t>(abnormal));
    std::vector<int> group(knees.size(), -1);
    auto deal = [&](const std::vector<std::size_t>& ids, const std::vector<int>& sizes) {
        std::size_t k = 0;
        for (std::size_t g = 0; g < sizes.size(); ++g)
            for (int c = 0; c < sizes[g]; ++c) group[ids[k++]] = static_cast<int>(g);
    };
    deal(normal, n_sizes);
    deal(abnormal, a_sizes);
    return group;
}

/// Per-repetition fold assignment of every row, derived from knee groups.
/// Shared by every feature and subset evaluated under one protocol.
struct CvPlan {
    CvProtocol protocol;
    std::vector<int> labels;                   // +1 / -1 per row
    std::vector<std::vector<int>> fold_of_row; // [repetition][row]

    int repetitions() const { return static_cast<int>(fold_of_row.size()); }
    std::size_t rows() const { return labels.size(); }
};

inline CvPlan make_plan(std::span<const std::string> knee_ids, std::span<const int> labels, const CvProtocol& cv) {
    if (knee_ids.size() != labels.size()) throw Error(Errc::shape, "knee id and label counts differ");
    std::map<std::string, std::size_t> index;
    std::vector<KneeInfo> knees;
    std::vector<std::size_t> knee_of_row(knee_ids.size());
    for (std::size_t r = 0; r < knee_ids.size(); ++r) {
        const Label l = labels[r] > 0 ? Label::abnormal : Label::normal;
        auto [it, fresh] = index.emplace(knee_ids[r], knees.size());
        if (fresh) knees.push_back({knee_ids[r], l});
        else if (knees[it->second].label != l)
            throw Error(Errc::format, "knee '" + knee_ids[r] + "' carries both labels");
        knee_of_row[r] = it->second;
    }
    CvPlan plan;
    plan.protocol = cv;
    plan.labels.assign(labels.begin(), labels.end());
    for (int rep = 0; rep < cv.repetitions; ++rep) {
        const auto groups = make_groups(knees, cv, derive_seed(cv.seed, {static_cast<std::uint64_t>(rep)}));
        std::vector<int> folds(knee_ids.size());
        for (std::size_t r = 0; r < folds.size(); ++r) folds[r] = groups[knee_of_row[r]];
        plan.fold_of_row.push_back(std::move(folds));
    }
    return plan;
}

/// Column-wise z-scaling fitted on training rows. A zero-spread column
/// keeps divisor 1.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Matrix& train) {
        Standardizer s;
        const double n = static_cast<double>(train.rows());
        s.mean = train.colwise().mean();
        s.scale.resize(train.cols());
        for (Eigen::Index c = 0; c < train.cols(); ++c) {
            const double ss = (train.col(c).array() - s.mean[c]).square().sum();
            const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
            s.scale[c] = sd > 0 && std::isfinite(sd) ? sd : 1.0;
        }
        return s;
    }

    Matrix apply(const Matrix& x) const {
        if (x.cols() != mean.size()) throw Error(Errc::shape, "standardizer width mismatch");
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
};

struct FoldData {
    Matrix train, test;
    std::vector<int> y_train, y_test;
    std::vector<std::size_t> test_rows;
    Standardizer scaler;
};

/// Splits rows for one fold and standardises both sides with the
/// training-side parameters.
inline FoldData split_fold(const Matrix& x, std::span<const int> labels, std::span<const int> fold_of_row, int fold) {
    std::vector<std::size_t> tr, te;
    for (std::size_t r = 0; r < fold_of_row.size(); ++r) (fold_of_row[r] == fold ? te : tr).push_back(r);
    FoldData f;
    Matrix raw_train(static_cast<Eigen::Index>(tr.size()), x.cols());
    Matrix raw_test(static_cast<Eigen::Index>(te.size()), x.cols());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        raw_train.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(tr[i]));
        f.y_train.push_back(labels[tr[i]]);
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
        raw_test.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(te[i]));
        f.y_test.push_back(labels[te[i]]);
    }
    f.scaler = Standardizer::fit(raw_train);
    f.train = f.scaler.apply(raw_train);
    f.test = f.scaler.apply(raw_test);
    f.test_rows = std::move(te);
    return f;
}

struct CvResult {
    std::vector<MetricSet> per_rep;
    MetricSet mean;
    std::vector<double> first_scores;  // pooled test scores of repetition 0, row order
};

inline MetricSet mean_metrics(std::span<const MetricSet> xs) {
    MetricSet m{0, 0, 0, 0, 0};
    for (const auto& x : xs) {
        m.er += x.er;
        m.f05 += x.f05;
        m.mcc += x.mcc;
        m.auc += x.auc;
        m.s += x.s;
    }
    const double n = static_cast<double>(xs.size());
    m.er /= n;
    m.f05 /= n;
    m.mcc /= n;
    m.auc /= n;
    m.s /= n;
    return m;
}

/// One repetition: every fold trains on the others; test scores are pooled
/// over the whole corpus before computing metrics.
inline MetricSet run_repetition(const Matrix& x, const CvPlan& plan, int rep, ClassifierKind kind,
                                const TrainOptions& opt = {}, std::vector<double>* scores_out = nullptr) {
    const auto& folds = plan.fold_of_row[static_cast<std::size_t>(rep)];
    std::vector<double> scores(plan.rows());
    double threshold = 0.0;
    for (int g = 0; g < plan.protocol.groups(); ++g) {
        FoldData f = split_fold(x, plan.labels, folds, g);
        if (f.test_rows.empty()) continue;
        const auto seed = derive_seed(plan.protocol.seed, {static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(g), 7});
        const Classifier c = train_classifier(kind, f.train, f.y_train, seed, opt);
        threshold = c.threshold();
        const Vector s = c.scores(f.test);
        for (std::size_t i = 0; i < f.test_rows.size(); ++i) scores[f.test_rows[i]] = s[static_cast<Eigen::Index>(i)];
    }
    if (scores_out) *scores_out = scores;
    return evaluate_scores(scores, plan.labels, threshold);
}

/// Full protocol over the columns of x. Repetitions run on up to `jobs`
/// threads; results are independent of the thread count.
inline CvResult run_cv(const Matrix& x, const CvPlan& plan, ClassifierKind kind, unsigned jobs = 1,
                       const TrainOptions& opt = {}) {
    if (x.cols() == 0) throw Error(Errc::shape, "no feature columns to evaluate");
    if (static_cast<std::size_t>(x.rows()) != plan.rows()) throw Error(Errc::shape, "plan and data row counts differ");
    CvResult out;
    out.per_rep.resize(static_cast<std::size_t>(plan.repetitions()));
    parallel_for(out.per_rep.size(), jobs, [&](std::size_t r) {
        out.per_rep[r] = run_repetition(x, plan, static_cast<int>(r), kind, opt, r == 0 ? &out.first_scores : nullptr);
    });
    out.mean = mean_metrics(out.per_rep);
    return out;
}

}  // namespace kneeae
