#pragma once

// Confusion-matrix metrics, ROC/AUC and the composite S score. Positive
// means abnormal (+1).

#include "kneeae/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

namespace kneeae {

struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    long total() const { return tp + fp + tn + fn; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
};

/// Predicts abnormal when score > threshold.
inline ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                                 double threshold = 0.0) {
    if (scores.size() != labels.size()) throw Error(Errc::shape, "score and label counts differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > threshold;
        const bool pos = labels[i] > 0;
        if (pred && pos) ++cm.tp;
        else if (pred) ++cm.fp;
        else if (pos) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

inline void require_nonempty(const ConfusionMatrix& cm) {
    if (cm.total() <= 0) throw Error(Errc::empty_evaluation, "confusion matrix is empty");
}

inline double error_rate(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    return static_cast<double>(cm.fp + cm.fn) / static_cast<double>(cm.total());
}

inline double precision(const ConfusionMatrix& cm) {
    const long d = cm.tp + cm.fp;
    return d == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(d);
}

inline double recall(const ConfusionMatrix& cm) {
    const long d = cm.tp + cm.fn;
    return d == 0 ? 0.0 : static_cast<double>(cm.tp) / static_cast<double>(d);
}

/// F_beta on the abnormal class; 0 when precision and recall are both 0.
inline double f_beta(const ConfusionMatrix& cm, double beta = 0.5) {
    require_nonempty(cm);
    const double p = precision(cm), r = recall(cm), b2 = beta * beta;
    const double d = b2 * p + r;
    return d == 0.0 ? 0.0 : (1.0 + b2) * p * r / d;
}

/// Matthews correlation; a zero denominator yields 0.
inline double mcc(const ConfusionMatrix& cm) {
    require_nonempty(cm);
    const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
    const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
    const double d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    return d == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(d);
}

inline double s_score(double mcc_value, double er, double f05) { return (mcc_value + (1.0 - er) + f05) / 3.0; }

struct RocCurve {
    std::vector<double> thresholds;  // score cut: predict abnormal when score >= threshold
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
};

/// ROC by sweeping every distinct score from high to low. Tied scores move
/// the curve diagonally in one step, so the area equals the tie-corrected
/// Mann-Whitney statistic.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(Errc::shape, "score and label counts differ");
    long pos = 0, neg = 0;
    for (int l : labels) (l > 0 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw Error(Errc::undefined_auc, "ROC needs both classes");
    for (double s : scores)
        if (std::isnan(s)) throw Error(Errc::numeric, "NaN score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.thresholds.push_back(std::numeric_limits<double>::infinity());
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    long tp = 0, fp = 0;
    // Twice the area in units of one positive-negative pair: exact integers.
    long double area2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        const long tp0 = tp, fp0 = fp;
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] > 0 ? tp : fp)++;
        area2 += static_cast<long double>(fp - fp0) * static_cast<long double>(tp + tp0);
        roc.thresholds.push_back(s);
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    roc.auc = static_cast<double>(area2 / (2.0L * static_cast<long double>(pos) * static_cast<long double>(neg)));
    return roc;
}

inline void write_roc_csv(std::ostream& os, const RocCurve& roc) {
    os << "threshold,fpr,tpr\n";
    os.precision(17);
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) {
        if (std::isinf(roc.thresholds[i])) os << "inf";
        else os << roc.thresholds[i];
        os << ',' << roc.fpr[i] << ',' << roc.tpr[i] << '\n';
    }
}

/// Everything derived from one pooled set of test predictions.
struct MetricSet {
    double er = 0.0, f05 = 0.0, mcc = 0.0, auc = 0.5, s = 0.0;
};

inline MetricSet evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
    const auto cm = confusion(scores, labels, threshold);
    MetricSet m;
    m.er = error_rate(cm);
    m.f05 = f_beta(cm, 0.5);
    m.mcc = mcc(cm);
    m.auc = roc_auc(scores, labels).auc;
    m.s = s_score(m.mcc, m.er, m.f05);
    return m;
}

}  // namespace kneeae
