#pragma once

// Per-vector scoring, threshold-grid nested subsets and AUC-based subset
// choice.

#include "kneeae/cv.hpp"
#include "kneeae/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

namespace kneeae {

struct FeatureScore {
    int vector = 0;  // index into FeatureSet::vectors
    SetTag set = SetTag::M;
    VectorSource source;
    double er = 0.0, f05 = 0.0, mcc = 0.0, auc = 0.5;
};

struct Thresholds {
    double er = 0.456;
    double f05 = 0.0;
    double mcc = 0.0;
};

struct SubsetSelection {
    Thresholds thresholds;       // loosest grid cell producing this member set
    std::vector<int> members;    // ascending vector indices
    int rank = 0;                // 1 = largest subset of the nested family
    int cells = 0;               // grid cells mapping to this member set
    CvResult result;             // filled by select_best
};

inline bool admits(const FeatureScore& s, const Thresholds& t) {
    return s.er <= t.er && s.f05 >= t.f05 && s.mcc >= t.mcc;
}

/// Each 11-dimensional vector trained and tested alone with a linear SVM
/// under the shared plan. Vectors are scored in parallel.
inline std::vector<FeatureScore> score_features(const FeatureSet& fs, const CvPlan& plan, unsigned jobs = 1) {
    std::vector<FeatureScore> out(static_cast<std::size_t>(fs.vector_count()));
    parallel_for(out.size(), jobs, [&](std::size_t v) {
        const int id = static_cast<int>(v);
        const auto res = run_cv(fs.columns(std::span<const int>(&id, 1)), plan, ClassifierKind::svm_linear, 1);
        out[v] = {id, fs.tag, fs.vectors[v], res.mean.er, res.mean.f05, res.mean.mcc, res.mean.auc};
    });
    return out;
}

inline std::vector<double> threshold_grid(double step) {
    std::vector<double> g;
    const int n = static_cast<int>(std::lround(1.0 / step));
    for (int i = 0; i <= n; ++i) g.push_back(static_cast<double>(i) / n);
    return g;
}

/// Enumerates the (F0.5, MCC) threshold grid at fixed E_r threshold,
/// dropping empty and duplicate member sets. Output is ordered from the
/// largest subset to the smallest.
inline std::vector<SubsetSelection> build_subsets(std::span<const FeatureScore> scores, double theta_er = 0.456,
                                                  double step = 0.05) {
    std::map<std::vector<int>, std::size_t> seen;
    std::vector<SubsetSelection> out;
    const auto grid = threshold_grid(step);
    for (double tf : grid)
        for (double tm : grid) {
            const Thresholds t{theta_er, tf, tm};
            std::vector<int> members;
            for (const auto& s : scores)
                if (admits(s, t)) members.push_back(s.vector);
            if (members.empty()) continue;
            std::sort(members.begin(), members.end());
            auto [it, fresh] = seen.emplace(members, out.size());
            if (fresh) out.push_back({t, std::move(members), 0, 1, {}});
            else ++out[it->second].cells;
        }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.members.size() > b.members.size(); });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

/// Subset of size one holding the vector with the best MCC (then lowest
/// E_r, then lowest index). Used when the grid admits nothing.
inline SubsetSelection fallback_subset(std::span<const FeatureScore> scores) {
    if (scores.empty()) throw Error(Errc::empty_input, "no feature scores");
    const FeatureScore* best = &scores[0];
    for (const auto& s : scores)
        if (s.mcc > best->mcc || (s.mcc == best->mcc && s.er < best->er)) best = &s;
    return {{best->er, best->f05, best->mcc}, {best->vector}, 1, 0, {}};
}

struct SelectionOutcome {
    std::vector<SubsetSelection> subsets;  // evaluated candidates, results filled
    std::size_t best = 0;
    bool fallback = false;

    const SubsetSelection& winner() const { return subsets.at(best); }
};

/// Evaluates every candidate under the plan and keeps the highest mean AUC;
/// ties go to fewer vectors, then lower mean E_r.
inline SelectionOutcome select_best(std::vector<SubsetSelection> subsets, const FeatureSet& fs, const CvPlan& plan,
                                    ClassifierKind kind, unsigned jobs = 1, const TrainOptions& opt = {}) {
    if (subsets.empty()) throw Error(Errc::empty_input, "no candidate subsets");
    SelectionOutcome out;
    const bool per_subset = subsets.size() >= jobs;
    if (per_subset) {
        parallel_for(subsets.size(), jobs, [&](std::size_t i) {
            subsets[i].result = run_cv(fs.columns(subsets[i].members), plan, kind, 1, opt);
        });
    } else {
        for (auto& s : subsets) s.result = run_cv(fs.columns(s.members), plan, kind, jobs, opt);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < subsets.size(); ++i) {
        const auto& a = subsets[i].result.mean;
        const auto& b = subsets[best].result.mean;
        if (a.auc > b.auc) best = i;
        else if (a.auc == b.auc) {
            if (subsets[i].members.size() < subsets[best].members.size()) best = i;
            else if (subsets[i].members.size() == subsets[best].members.size() && a.er < b.er) best = i;
        }
    }
    out.subsets = std::move(subsets);
    out.best = best;
    return out;
}

/// Scores, builds subsets (falling back to the best single vector when the
/// grid admits none) and selects the winner.
inline SelectionOutcome run_selection(const FeatureSet& fs, const CvPlan& plan, ClassifierKind kind,
                                      std::vector<FeatureScore>* scores_out = nullptr, double theta_er = 0.456,
                                      double step = 0.05, unsigned jobs = 1) {
    auto scores = score_features(fs, plan, jobs);
    auto subsets = build_subsets(scores, theta_er, step);
    const bool fallback = subsets.empty();
    if (fallback) subsets.push_back(fallback_subset(scores));
    auto out = select_best(std::move(subsets), fs, plan, kind, jobs);
    out.fallback = fallback;
    if (scores_out) *scores_out = std::move(scores);
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const VectorSource& v, SetTag tag) {
    nlohmann::json j{{"set", std::string(1, to_char(tag))}, {"coefficient", v.coefficient}, {"order", v.order}};
    j["center_hz"] = std::isnan(v.center_hz) ? nlohmann::json(nullptr) : nlohmann::json(v.center_hz);
    return j;
}

inline nlohmann::json to_json(const MetricSet& m) {
    return {{"auc", m.auc}, {"er", m.er}, {"f05", m.f05}, {"mcc", m.mcc}, {"s", m.s}};
}

inline nlohmann::json to_json(const CvResult& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : r.per_rep) per.push_back(to_json(m));
    return {{"mean", to_json(r.mean)}, {"per_repetition", std::move(per)}};
}

inline nlohmann::json to_json(const FeatureScore& s) {
    return {{"vector", s.vector}, {"source", to_json(s.source, s.set)}, {"er", s.er},
            {"f05", s.f05},       {"mcc", s.mcc},                        {"auc", s.auc}};
}

inline nlohmann::json to_json(const SubsetSelection& s, const FeatureSet& fs) {
    nlohmann::json members = nlohmann::json::array();
    for (int v : s.members) members.push_back(to_json(fs.vectors[static_cast<std::size_t>(v)], fs.tag));
    for (std::size_t i = 0; i < s.members.size(); ++i) members[i]["vector"] = s.members[i];
    return {{"thresholds", {{"er", s.thresholds.er}, {"f05", s.thresholds.f05}, {"mcc", s.thresholds.mcc}}},
            {"rank", s.rank},
            {"cells", s.cells},
            {"members", std::move(members)},
            {"evaluation", to_json(s.result)}};
}

}  // namespace kneeae
