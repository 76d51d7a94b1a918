#pragma once

// L1 soft-margin SVM trained by SMO. Working set: the maximal KKT violator
// paired with the partner giving the largest second-order decrease.

#include "kneeae/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace kneeae {

enum class KernelType { linear, gaussian };

struct Kernel {
    KernelType type = KernelType::linear;
    double gamma = 1.0;  // exp(-gamma |a - b|^2)

    static Kernel linear() { return {KernelType::linear, 1.0}; }
    static Kernel gaussian(double gamma = 1.0) { return {KernelType::gaussian, gamma}; }
};

/// Gram matrix between the rows of a and the rows of b.
inline Matrix gram(const Kernel& k, const Matrix& a, const Matrix& b) {
    Matrix g = a * b.transpose();
    if (k.type == KernelType::gaussian) {
        const Vector na = a.rowwise().squaredNorm();
        const Vector nb = b.rowwise().squaredNorm();
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            for (Eigen::Index i = 0; i < g.rows(); ++i)
                g(i, j) = std::exp(-k.gamma * std::max(0.0, na[i] + nb[j] - 2.0 * g(i, j)));
    }
    return g;
}

struct SmoOptions {
    double C = 1.0;
    double tolerance = 1e-4;  // stop when the maximal KKT violation drops below this
    long max_iterations = 0;  // 0: max(1e6, 100 n)
};

struct SvmModel {
    Kernel kernel;
    double C = 1.0;
    Matrix support_vectors;  // one row per support vector
    Vector coef;             // alpha_s * y_s
    double bias = 0.0;
    Vector weights;          // explicit w for the linear kernel

    Eigen::Index dimension() const { return support_vectors.cols(); }

    double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        if (x.size() != dimension()) throw Error(Errc::shape, "SVM input has wrong dimension");
        if (kernel.type == KernelType::linear) return x.dot(weights) + bias;
        double s = bias;
        for (Eigen::Index i = 0; i < support_vectors.rows(); ++i)
            s += coef[i] * std::exp(-kernel.gamma * (support_vectors.row(i) - x).squaredNorm());
        return s;
    }

    Vector decisions(const Matrix& x) const {
        if (x.cols() != dimension()) throw Error(Errc::shape, "SVM input has wrong dimension");
        if (kernel.type == KernelType::linear) return (x * weights).array() + bias;
        return (gram(kernel, x, support_vectors) * coef).array() + bias;
    }
};

/// Everything the solver knows at termination; tests inspect the dual.
struct SvmFit {
    SvmModel model;
    Vector alpha;             // dual variables, one per training row
    double objective = 0.0;   // dual objective sum(alpha) - 1/2 alpha' Q alpha
    double max_violation = 0.0;
    long iterations = 0;
    bool converged = false;
};

namespace detail {

inline void check_training_data(const Matrix& x, std::span<const int> y) {
    if (x.rows() != static_cast<Eigen::Index>(y.size())) throw Error(Errc::shape, "label count differs from rows");
    if (!x.allFinite()) throw Error(Errc::numeric, "training data contains non-finite values");
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) pos = true;
        else if (v == -1) neg = true;
        else throw Error(Errc::config, "labels must be +1 or -1");
    }
    if (!pos || !neg) throw Error(Errc::degenerate_training, "training data holds a single class");
}

/// Position of each row in lexicographic (label, features) order.
inline std::vector<std::size_t> canonical_rank(const Matrix& x, std::span<const int> y) {
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (y[a] != y[b]) return y[a] < y[b];
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double u = x(static_cast<Eigen::Index>(a), c), v = x(static_cast<Eigen::Index>(b), c);
            if (u != v) return u < v;
        }
        return false;
    });
    std::vector<std::size_t> rank(y.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    return rank;
}

}  // namespace detail

inline SvmFit svm_fit(const Matrix& x, std::span<const int> y, const Kernel& kernel = Kernel::linear(),
                      const SmoOptions& opt = {}) {
    detail::check_training_data(x, y);
    const Eigen::Index n = x.rows();
    const auto un = static_cast<std::size_t>(n);
    const double c = opt.C;
    const Matrix k = gram(kernel, x, x);
    const long max_iter = opt.max_iterations > 0 ? opt.max_iterations : std::max<long>(1'000'000, 100 * n);
    constexpr double tau = 1e-12;

    // Ties in working-set selection go to the lexicographically smallest
    // (label, row) so the optimisation path ignores row order.
    const auto rank = detail::canonical_rank(x, y);
    std::vector<double> yv(un), diag(un), alpha(un, 0.0), mg(un, 1.0);  // mg = -y * grad, grad = Q a - e
    for (std::size_t t = 0; t < un; ++t) {
        yv[t] = y[t];
        diag[t] = k(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
        mg[t] = yv[t];
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<char> up(un), low(un);
    auto refresh = [&](std::size_t t) {
        up[t] = yv[t] > 0 ? alpha[t] < c : alpha[t] > 0;
        low[t] = yv[t] > 0 ? alpha[t] > 0 : alpha[t] < c;
    };
    for (std::size_t t = 0; t < un; ++t) refresh(t);

    // i: maximal violator in I_up (ties to the lower canonical rank).
    auto consider_up = [&](std::size_t t, double& gmax, std::size_t& i) {
        const double v = mg[t];
        if (up[t] && (v > gmax || (v == gmax && rank[t] < rank[i]))) {
            gmax = v;
            i = t;
        }
    };
    double gmax = -inf;
    std::size_t i = un;
    for (std::size_t t = 0; t < un; ++t) consider_up(t, gmax, i);

    SvmFit fit;
    long iter = 0;
    double gap = 0.0;
    for (;; ++iter) {
        // j: the partner in I_low with the largest second-order decrease
        // b^2 / a, compared by cross-multiplication.
        std::size_t j = un;
        double gmin = inf, best_num = 0.0, best_den = 1.0;
        if (i < un) {
            const double* ki = k.col(static_cast<Eigen::Index>(i)).data();
            const double kii = diag[i];
            for (std::size_t t = 0; t < un; ++t) {
                if (!low[t]) continue;
                const double v = mg[t];
                gmin = std::min(gmin, v);
                const double b = gmax - v;
                if (!(b > 0)) continue;
                double a = kii + diag[t] - 2.0 * ki[t];
                if (a <= 0) a = tau;
                const double lhs = b * b * best_den, rhs = best_num * a;
                if (j == un || lhs > rhs || (lhs == rhs && rank[t] < rank[j])) {
                    best_num = b * b;
                    best_den = a;
                    j = t;
                }
            }
        }
        gap = gmax - gmin;
        if (i == un || j == un || gap < opt.tolerance) {
            fit.converged = true;
            break;
        }
        if (iter >= max_iter) break;

        const double yi = yv[i], yj = yv[j];
        const double old_ai = alpha[i], old_aj = alpha[j];
        const double* ki = k.col(static_cast<Eigen::Index>(i)).data();
        const double* kj = k.col(static_cast<Eigen::Index>(j)).data();
        double quad = diag[i] + diag[j] - 2.0 * ki[j];
        if (quad <= 0) quad = tau;
        const double gi = -yi * mg[i], gj = -yj * mg[j];
        if (yi != yj) {
            const double step = (-gi - gj) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += step;
            alpha[j] += step;
            if (diff > 0) {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
            }
            if (diff > 0) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
            } else {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
            }
        } else {
            const double step = (gi - gj) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= step;
            alpha[j] += step;
            if (sum > c) {
                if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
            } else {
                if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
            }
            if (sum > c) {
                if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
            } else {
                if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
            }
        }
        refresh(i);
        refresh(j);
        // grad_t += y_t (K_ti y_i da_i + K_tj y_j da_j), so -y_t grad_t drops
        // by the bracket. The next maximal violator is found in the same pass.
        const double di = (alpha[i] - old_ai) * yi, dj = (alpha[j] - old_aj) * yj;
        gmax = -inf;
        i = un;
        for (std::size_t t = 0; t < un; ++t) {
            mg[t] -= ki[t] * di + kj[t] * dj;
            consider_up(t, gmax, i);
        }
    }

    // rho: mean of y G over free vectors, else midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    long n_free = 0;
    for (std::size_t t = 0; t < un; ++t) {
        const double yg = -mg[t];
        if (alpha[t] >= c) {
            if (yv[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (yv[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    SvmModel& m = fit.model;
    m.kernel = kernel;
    m.C = c;
    m.bias = -rho;
    std::vector<std::size_t> sv;
    for (std::size_t t = 0; t < un; ++t)
        if (alpha[t] > 0) sv.push_back(t);
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    m.coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
        m.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(static_cast<Eigen::Index>(sv[s]));
        m.coef[static_cast<Eigen::Index>(s)] = alpha[sv[s]] * yv[sv[s]];
    }
    m.weights = m.support_vectors.transpose() * m.coef;

    fit.alpha = Eigen::Map<const Vector>(alpha.data(), n);
    // Dual objective sum(a) - a'Qa/2 with Qa = grad + e = e - y * mg.
    double obj = 0.0;
    for (std::size_t t = 0; t < un; ++t) obj += alpha[t] - 0.5 * alpha[t] * (1.0 - yv[t] * mg[t]);
    fit.objective = obj;
    fit.max_violation = std::max(gap, 0.0);
    fit.iterations = iter;
    return fit;
}

inline SvmModel svm_train(const Matrix& x, std::span<const int> y, const Kernel& kernel = Kernel::linear(),
                          const SmoOptions& opt = {}) {
    return svm_fit(x, y, kernel, opt).model;
}

inline nlohmann::json to_json(const SvmModel& m) {
    nlohmann::json sv = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i)
        sv.push_back(std::vector<double>(m.support_vectors.row(i).begin(), m.support_vectors.row(i).end()));
    return {{"type", "svm"},
            {"kernel", m.kernel.type == KernelType::linear ? "linear" : "gaussian"},
            {"gamma", m.kernel.gamma},
            {"C", m.C},
            {"bias", m.bias},
            {"dimension", m.dimension()},
            {"coef", std::vector<double>(m.coef.begin(), m.coef.end())},
            {"support_vectors", std::move(sv)}};
}

inline SvmModel svm_from_json(const nlohmann::json& j) {
    SvmModel m;
    m.kernel.type = j.at("kernel").get<std::string>() == "linear" ? KernelType::linear : KernelType::gaussian;
    m.kernel.gamma = j.at("gamma").get<double>();
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    const auto coef = j.at("coef").get<std::vector<double>>();
    const auto dim = j.at("dimension").get<Eigen::Index>();
    m.coef = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    m.support_vectors.resize(m.coef.size(), dim);
    for (Eigen::Index i = 0; i < m.coef.size(); ++i) {
        const auto row = j.at("support_vectors").at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        m.support_vectors.row(i) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), dim);
    }
    m.weights = m.support_vectors.transpose() * m.coef;
    return m;
}

}  // namespace kneeae
