#pragma once

// Linear discriminant analysis with a ridge-regularised pooled covariance.

#include "kneeae/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <span>
#include <vector>

namespace kneeae {

struct LdaModel {
    Vector mean_normal;
    Vector mean_abnormal;
    double prior_normal = 0.5;
    double prior_abnormal = 0.5;
    double ridge = 0.0;  // added to the pooled covariance diagonal
    Vector weights;      // Sigma^-1 (mu_abnormal - mu_normal)
    double bias = 0.0;

    Eigen::Index dimension() const { return weights.size(); }

    /// log P(abnormal | x) - log P(normal | x)
    double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        if (x.size() != dimension()) throw Error(Errc::shape, "LDA input has wrong dimension");
        return x.dot(weights) + bias;
    }

    Vector scores(const Matrix& x) const {
        if (x.cols() != dimension()) throw Error(Errc::shape, "LDA input has wrong dimension");
        return (x * weights).array() + bias;
    }
};

struct PooledCovariance {
    Matrix centered;  // rows minus their class mean, scaled by 1/sqrt(n - 2)
    double ridge = 0.0;

    /// Dense regularised covariance (d x d); only for small d.
    Matrix dense() const {
        Matrix s = centered.transpose() * centered;
        s.diagonal().array() += ridge;
        return s;
    }
};

namespace detail {

inline void split_classes(const Matrix& x, std::span<const int> y, Vector& mu_neg, Vector& mu_pos, long& n_neg,
                          long& n_pos) {
    if (x.rows() != static_cast<Eigen::Index>(y.size())) throw Error(Errc::shape, "label count differs from rows");
    mu_neg = Vector::Zero(x.cols());
    mu_pos = Vector::Zero(x.cols());
    n_neg = n_pos = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (y[static_cast<std::size_t>(i)] > 0) { mu_pos += x.row(i).transpose(); ++n_pos; }
        else { mu_neg += x.row(i).transpose(); ++n_neg; }
    }
    if (n_neg < 2 || n_pos < 2) throw Error(Errc::degenerate_training, "LDA needs at least 2 rows per class");
    mu_neg /= static_cast<double>(n_neg);
    mu_pos /= static_cast<double>(n_pos);
}

}  // namespace detail

/// Pooled within-class covariance with ridge 1e-6 * trace / d.
inline PooledCovariance pooled_covariance(const Matrix& x, std::span<const int> y) {
    Vector mu_neg, mu_pos;
    long n_neg = 0, n_pos = 0;
    detail::split_classes(x, y, mu_neg, mu_pos, n_neg, n_pos);
    PooledCovariance pc;
    pc.centered = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        pc.centered.row(i) -= (y[static_cast<std::size_t>(i)] > 0 ? mu_pos : mu_neg).transpose();
    pc.centered /= std::sqrt(static_cast<double>(x.rows() - 2));
    const double trace = pc.centered.squaredNorm();
    pc.ridge = 1e-6 * (trace > 0 ? trace / static_cast<double>(x.cols()) : 1.0);
    return pc;
}

inline LdaModel lda_train(const Matrix& x, std::span<const int> y) {
    if (!x.allFinite()) throw Error(Errc::numeric, "training data contains non-finite values");
    LdaModel m;
    long n_neg = 0, n_pos = 0;
    detail::split_classes(x, y, m.mean_normal, m.mean_abnormal, n_neg, n_pos);
    const PooledCovariance pc = pooled_covariance(x, y);
    m.ridge = pc.ridge;
    const Vector diff = m.mean_abnormal - m.mean_normal;
    const Vector mid = 0.5 * (m.mean_abnormal + m.mean_normal);

    // Sigma = ridge I + U'U with U = pc.centered (n x d). When d > n solve
    // through the n x n Woodbury system instead of factoring d x d.
    const Matrix& u = pc.centered;
    if (x.cols() <= x.rows()) {
        m.weights = pc.dense().llt().solve(diff);
    } else {
        Matrix small = u * u.transpose();
        small.diagonal().array() += pc.ridge;
        const Vector ud = u * diff;
        m.weights = (diff - u.transpose() * small.llt().solve(ud)) / pc.ridge;
    }
    const double n = static_cast<double>(n_neg + n_pos);
    m.prior_normal = static_cast<double>(n_neg) / n;
    m.prior_abnormal = static_cast<double>(n_pos) / n;
    // w'x - w'(mu+ + mu-)/2 + log(pi+/pi-)
    m.bias = -m.weights.dot(mid) + std::log(m.prior_abnormal / m.prior_normal);
    return m;
}

inline double lda_score(const LdaModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x) { return m.score(x); }

inline nlohmann::json to_json(const LdaModel& m) {
    return {{"type", "lda"},
            {"mean_normal", std::vector<double>(m.mean_normal.begin(), m.mean_normal.end())},
            {"mean_abnormal", std::vector<double>(m.mean_abnormal.begin(), m.mean_abnormal.end())},
            {"prior_normal", m.prior_normal},
            {"prior_abnormal", m.prior_abnormal},
            {"ridge", m.ridge},
            {"weights", std::vector<double>(m.weights.begin(), m.weights.end())},
            {"bias", m.bias}};
}

inline LdaModel lda_from_json(const nlohmann::json& j) {
    auto vec = [&](const char* key) {
        const auto v = j.at(key).get<std::vector<double>>();
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    LdaModel m;
    m.mean_normal = vec("mean_normal");
    m.mean_abnormal = vec("mean_abnormal");
    m.weights = vec("weights");
    m.prior_normal = j.at("prior_normal").get<double>();
    m.prior_abnormal = j.at("prior_abnormal").get<double>();
    m.ridge = j.at("ridge").get<double>();
    m.bias = j.at("bias").get<double>();
    return m;
}

}  // namespace kneeae
