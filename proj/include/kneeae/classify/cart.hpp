#pragma once

// CART: exhaustive Gini splits, grown to purity, then minimal
// cost-complexity pruning with the complexity parameter picked by internal
// k-fold cross-validation.

#include "kneeae/common.hpp"
#include "kneeae/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace kneeae {

struct CartNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;     // rows with x[feature] <= threshold
    int right = -1;
    long n_normal = 0;
    long n_abnormal = 0;

    bool is_leaf() const { return feature < 0; }
    long count() const { return n_normal + n_abnormal; }
};

struct CartModel {
    std::vector<CartNode> nodes;  // nodes[0] is the root
    Eigen::Index dimension = 0;
    double alpha = 0.0;                   // complexity parameter of the kept subtree
    std::vector<double> pruning_alphas;   // weakest-link sequence of the full tree

    /// Fraction of abnormal training rows in the leaf reached by x.
    double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        if (x.size() != dimension) throw Error(Errc::shape, "CART input has wrong dimension");
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[n.feature] <= n.threshold ? n.left : n.right;
        }
        const auto& leaf = nodes[static_cast<std::size_t>(i)];
        return static_cast<double>(leaf.n_abnormal) / static_cast<double>(leaf.count());
    }

    Vector scores(const Matrix& x) const {
        Vector s(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) s[r] = score(x.row(r));
        return s;
    }

    int leaves() const {
        return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const CartNode& n) { return n.is_leaf(); }));
    }

    int depth() const {
        std::vector<int> d(nodes.size(), 0);
        int best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            best = std::max(best, d[i]);
            if (!nodes[i].is_leaf()) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            }
        }
        return best;
    }
};

struct CartOptions {
    int min_leaf = 1;
    int cv_folds = 5;
    bool prune = true;
    std::uint64_t seed = 0;
};

namespace detail {

inline double gini(long neg, long pos) {
    const double n = static_cast<double>(neg + pos);
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / n;
    return 2.0 * p * (1.0 - p);
}

inline std::vector<CartNode> grow_tree(const Matrix& x, std::span<const int> y, std::vector<Eigen::Index> rows,
                                       int min_leaf) {
    std::vector<CartNode> nodes;
    struct Pending {
        int node;
        std::vector<Eigen::Index> rows;
    };
    std::vector<Pending> stack;
    nodes.emplace_back();
    stack.push_back({0, std::move(rows)});
    std::vector<Eigen::Index> order;
    // Breadth-first by index keeps parents before children.
    for (std::size_t head = 0; head < stack.size(); ++head) {
        const int id = stack[head].node;
        const auto& idx = stack[head].rows;
        long neg = 0, pos = 0;
        for (auto r : idx) (y[static_cast<std::size_t>(r)] > 0 ? pos : neg)++;
        nodes[static_cast<std::size_t>(id)].n_normal = neg;
        nodes[static_cast<std::size_t>(id)].n_abnormal = pos;
        const auto n = static_cast<long>(idx.size());
        if (neg == 0 || pos == 0 || n < 2L * min_leaf) continue;

        double best_cost = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;
        order = idx;
        for (Eigen::Index f = 0; f < x.cols(); ++f) {
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
            long lneg = 0, lpos = 0;
            for (long s = 0; s + 1 < n; ++s) {
                (y[static_cast<std::size_t>(order[static_cast<std::size_t>(s)])] > 0 ? lpos : lneg)++;
                const double a = x(order[static_cast<std::size_t>(s)], f);
                const double b = x(order[static_cast<std::size_t>(s + 1)], f);
                if (!(a < b)) continue;
                const long nl = s + 1, nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double cost = static_cast<double>(nl) * gini(lneg, lpos) +
                                    static_cast<double>(nr) * gini(neg - lneg, pos - lpos);
                if (cost < best_cost) {
                    best_cost = cost;
                    best_feature = static_cast<int>(f);
                    best_threshold = a + 0.5 * (b - a);
                }
            }
        }
        if (best_feature < 0) continue;

        std::vector<Eigen::Index> left, right;
        for (auto r : idx) (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
        const int l = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes.emplace_back();
        auto& node = nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = l + 1;
        stack.push_back({l, std::move(left)});
        stack.push_back({l + 1, std::move(right)});
    }
    return nodes;
}

// Weakest-link pruning sequence: alphas[k] with the set of collapsed
// internal nodes for subtree k. Cost is sum over leaves of (n_t / N) gini(t).
struct PruningSequence {
    std::vector<double> alphas;
    std::vector<std::vector<char>> collapsed;
};

inline PruningSequence pruning_sequence(const std::vector<CartNode>& nodes) {
    const std::size_t m = nodes.size();
    const double total = static_cast<double>(nodes[0].count());
    std::vector<double> own(m);
    for (std::size_t i = 0; i < m; ++i)
        own[i] = static_cast<double>(nodes[i].count()) / total * gini(nodes[i].n_normal, nodes[i].n_abnormal);

    PruningSequence seq;
    std::vector<char> collapsed(m, 0), live(m, 0);
    std::vector<double> sub_cost(m), strength(m);
    std::vector<int> sub_leaves(m);
    constexpr double eps = 1e-15;

    // Refreshes subtree costs and link strengths; returns the weakest link.
    auto refresh = [&] {
        std::fill(live.begin(), live.end(), 0);
        live[0] = 1;
        for (std::size_t i = 0; i < m; ++i)
            if (live[i] && !nodes[i].is_leaf() && !collapsed[i])
                live[static_cast<std::size_t>(nodes[i].left)] = live[static_cast<std::size_t>(nodes[i].right)] = 1;
        double weakest = std::numeric_limits<double>::infinity();
        // Children have larger indices than parents: one reverse sweep.
        for (std::size_t i = m; i-- > 0;) {
            if (nodes[i].is_leaf() || collapsed[i]) {
                sub_cost[i] = own[i];
                sub_leaves[i] = 1;
                continue;
            }
            const auto l = static_cast<std::size_t>(nodes[i].left), r = static_cast<std::size_t>(nodes[i].right);
            sub_cost[i] = sub_cost[l] + sub_cost[r];
            sub_leaves[i] = sub_leaves[l] + sub_leaves[r];
            strength[i] = (own[i] - sub_cost[i]) / static_cast<double>(sub_leaves[i] - 1);
            if (live[i]) weakest = std::min(weakest, strength[i]);
        }
        return weakest;
    };

    double alpha = 0.0;
    for (;;) {
        double weakest = refresh();
        while (weakest <= alpha + eps) {
            for (std::size_t i = 0; i < m; ++i)
                if (live[i] && !nodes[i].is_leaf() && !collapsed[i] && strength[i] <= alpha + eps) collapsed[i] = 1;
            weakest = refresh();
        }
        seq.alphas.push_back(alpha);
        seq.collapsed.push_back(collapsed);
        if (nodes[0].is_leaf() || collapsed[0]) break;
        alpha = weakest;
    }
    return seq;
}

// Copies the subtree that survives `collapsed` into a compact node array.
inline std::vector<CartNode> compact(const std::vector<CartNode>& nodes, const std::vector<char>& collapsed) {
    std::vector<CartNode> out;
    std::vector<std::pair<std::size_t, int>> queue{{0, -1}};
    out.reserve(nodes.size());
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto [src, parent_slot] = queue[head];
        CartNode n = nodes[src];
        const int id = static_cast<int>(out.size());
        if (parent_slot >= 0) {
            auto& p = out[static_cast<std::size_t>(parent_slot / 2)];
            (parent_slot % 2 == 0 ? p.left : p.right) = id;
        }
        if (collapsed[src] || n.is_leaf()) {
            n.feature = -1;
            n.left = n.right = -1;
            out.push_back(n);
            continue;
        }
        out.push_back(n);
        queue.push_back({static_cast<std::size_t>(nodes[src].left), 2 * id});
        queue.push_back({static_cast<std::size_t>(nodes[src].right), 2 * id + 1});
    }
    return out;
}

}  // namespace detail

/// Grows the full tree without pruning.
inline CartModel cart_grow(const Matrix& x, std::span<const int> y, int min_leaf = 1) {
    if (x.rows() == 0) throw Error(Errc::empty_input, "CART needs at least one row");
    if (x.rows() != static_cast<Eigen::Index>(y.size())) throw Error(Errc::shape, "label count differs from rows");
    if (!x.allFinite()) throw Error(Errc::numeric, "training data contains non-finite values");
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    CartModel m;
    m.dimension = x.cols();
    m.nodes = detail::grow_tree(x, y, std::move(rows), min_leaf);
    return m;
}

inline CartModel cart_train(const Matrix& x, std::span<const int> y, const CartOptions& opt = {}) {
    CartModel full = cart_grow(x, y, opt.min_leaf);
    if (!opt.prune || full.nodes.size() == 1) return full;

    const auto seq = detail::pruning_sequence(full.nodes);
    full.pruning_alphas = seq.alphas;
    const std::size_t steps = seq.alphas.size();

    std::size_t chosen = 0;
    const auto n = static_cast<std::size_t>(x.rows());
    if (opt.cv_folds >= 2 && n >= static_cast<std::size_t>(opt.cv_folds) && steps > 1) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(opt.seed);
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<int> fold(n);
        for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(opt.cv_folds));

        // Geometric midpoints of consecutive alphas represent each interval.
        std::vector<double> probe(steps);
        for (std::size_t k = 0; k < steps; ++k)
            probe[k] = k + 1 < steps ? std::sqrt(seq.alphas[k] * seq.alphas[k + 1])
                                     : std::numeric_limits<double>::infinity();

        std::vector<long> errors(steps, 0);
        for (int f = 0; f < opt.cv_folds; ++f) {
            std::vector<Eigen::Index> tr, te;
            for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
            Matrix xtr(static_cast<Eigen::Index>(tr.size()), x.cols());
            std::vector<int> ytr(tr.size());
            for (std::size_t i = 0; i < tr.size(); ++i) {
                xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
                ytr[i] = y[static_cast<std::size_t>(tr[i])];
            }
            CartModel sub = cart_grow(xtr, ytr, opt.min_leaf);
            const auto sub_seq = sub.nodes.size() > 1 ? detail::pruning_sequence(sub.nodes) : detail::PruningSequence{};
            for (std::size_t k = 0; k < steps; ++k) {
                CartModel pruned = sub;
                if (!sub_seq.alphas.empty()) {
                    std::size_t pick = 0;
                    while (pick + 1 < sub_seq.alphas.size() && sub_seq.alphas[pick + 1] <= probe[k]) ++pick;
                    pruned.nodes = detail::compact(sub.nodes, sub_seq.collapsed[pick]);
                }
                for (auto r : te) {
                    const bool predicted_abnormal = pruned.score(x.row(r)) > 0.5;
                    if (predicted_abnormal != (y[static_cast<std::size_t>(r)] > 0)) ++errors[k];
                }
            }
        }
        // Fewest CV errors; ties go to the simpler (later) subtree.
        for (std::size_t k = 0; k < steps; ++k)
            if (errors[k] <= errors[chosen]) chosen = k;
    }

    CartModel out;
    out.dimension = full.dimension;
    out.pruning_alphas = seq.alphas;
    out.alpha = seq.alphas[chosen];
    out.nodes = detail::compact(full.nodes, seq.collapsed[chosen]);
    return out;
}

inline double cart_score(const CartModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x) { return m.score(x); }

inline nlohmann::json to_json(const CartModel& m) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : m.nodes)
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"n_normal", n.n_normal},
                         {"n_abnormal", n.n_abnormal}});
    return {{"type", "cart"},
            {"dimension", m.dimension},
            {"alpha", m.alpha},
            {"pruning_alphas", m.pruning_alphas},
            {"nodes", std::move(nodes)}};
}

inline CartModel cart_from_json(const nlohmann::json& j) {
    CartModel m;
    m.dimension = j.at("dimension").get<Eigen::Index>();
    m.alpha = j.at("alpha").get<double>();
    m.pruning_alphas = j.at("pruning_alphas").get<std::vector<double>>();
    for (const auto& n : j.at("nodes"))
        m.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                           n.at("right").get<int>(), n.at("n_normal").get<long>(), n.at("n_abnormal").get<long>()});
    return m;
}

}  // namespace kneeae
