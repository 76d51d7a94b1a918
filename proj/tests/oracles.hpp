#pragma once

// Slow, independent reference computations. Nothing here calls into the
// library except for plain data types.

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// |W x| where W is the complex Vandermonde DFT matrix, Hann-weighted frame
/// 0.5 (1 - cos(2 pi (n+1)/(N+1))). Returns bins 0..N/2.
inline VectorXd dft_magnitude(std::span<const double> frame) {
    const auto n = static_cast<Eigen::Index>(frame.size());
    const Eigen::Index k = 1 + n / 2;
    Eigen::VectorXcd xw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
        xw[i] = w * frame[static_cast<std::size_t>(i)];
    }
    Eigen::MatrixXcd v(k, n);
    for (Eigen::Index r = 0; r < k; ++r)
        for (Eigen::Index c = 0; c < n; ++c) {
            // reduce the phase index exactly before converting to an angle
            const long long idx = (static_cast<long long>(r) * c) % n;
            v(r, c) = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(n));
        }
    return (v * xw).cwiseAbs();
}

/// Ordinary least-squares slope of a[t-U..t+U] against u = -U..U.
inline double ls_slope(std::span<const double> a, std::size_t t, int span) {
    const int m = 2 * span + 1;
    MatrixXd design(m, 2);
    VectorXd rhs(m);
    for (int u = -span; u <= span; ++u) {
        design(u + span, 0) = 1.0;
        design(u + span, 1) = u;
        rhs[u + span] = a[static_cast<std::size_t>(static_cast<long>(t) + u)];
    }
    return design.colPivHouseholderQr().solve(rhs)[1];
}

/// Probability that a random positive outranks a random negative, ties 1/2.
inline double mann_whitney_auc(std::span<const double> s, std::span<const int> y) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] <= 0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] > 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

/// Euclidean projection onto {0 <= a <= C, y'a = 0} by bisection on the
/// multiplier of the equality constraint.
inline VectorXd project_box_hyperplane(const VectorXd& z, std::span<const int> y, double c) {
    auto at = [&](double nu) {
        VectorXd a(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) a[i] = std::clamp(z[i] - nu * y[static_cast<std::size_t>(i)], 0.0, c);
        return a;
    };
    auto residual = [&](double nu) {
        const VectorXd a = at(nu);
        double r = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) r += y[static_cast<std::size_t>(i)] * a[i];
        return r;  // nonincreasing in nu
    };
    double lo = -(z.cwiseAbs().maxCoeff() + c + 1.0), hi = -lo;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) > 0 ? lo : hi) = mid;
    }
    return at(0.5 * (lo + hi));
}

struct QpSolution {
    VectorXd alpha;
    double objective = 0.0;  // sum(a) - 1/2 a'Qa
};

/// Dual soft-margin SVM by accelerated projected gradient with adaptive
/// restart. Q_ij = y_i y_j K_ij.
inline QpSolution svm_dual(const MatrixXd& k, std::span<const int> y, double c, int iterations = 200000) {
    const Eigen::Index n = k.rows();
    MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)] * k(i, j);
    const double lip = std::max(Eigen::SelfAdjointEigenSolver<MatrixXd>(q).eigenvalues().maxCoeff(), 1e-12);
    auto f = [&](const VectorXd& a) { return 0.5 * a.dot(q * a) - a.sum(); };  // minimised
    VectorXd a = VectorXd::Zero(n), prev = a, mom = a;
    double t = 1.0, fa = f(a);
    for (int it = 0; it < iterations; ++it) {
        const VectorXd g = q * mom - VectorXd::Ones(n);
        const VectorXd next = project_box_hyperplane(mom - g / lip, y, c);
        const double fn = f(next);
        if (fn > fa) {  // restart momentum
            t = 1.0;
            mom = a;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        mom = next + ((t - 1.0) / tn) * (next - a);
        prev = a;
        a = next;
        t = tn;
        const double step = (a - prev).norm();
        fa = fn;
        if (step < 1e-14) break;
    }
    return {a, -fa};
}

/// Maximal KKT violation of a dual point: max over I_up of -y g minus min
/// over I_low of -y g, with g = Q a - 1.
inline double kkt_violation(const MatrixXd& k, std::span<const int> y, const VectorXd& a, double c) {
    const Eigen::Index n = k.rows();
    double up = -1e300, low = 1e300;
    for (Eigen::Index i = 0; i < n; ++i) {
        double g = -1.0;
        for (Eigen::Index j = 0; j < n; ++j)
            g += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)] * k(i, j) * a[j];
        const int yi = y[static_cast<std::size_t>(i)];
        const double v = -yi * g;
        const bool in_up = (yi > 0 && a[i] < c) || (yi < 0 && a[i] > 0);
        const bool in_low = (yi > 0 && a[i] > 0) || (yi < 0 && a[i] < c);
        if (in_up) up = std::max(up, v);
        if (in_low) low = std::min(low, v);
    }
    return std::max(0.0, up - low);
}

/// Widest-margin direction for separable 2-D data by scanning angles.
/// Returns the unit normal and the half-margin.
inline std::pair<Eigen::Vector2d, double> max_margin_2d(const MatrixXd& x, std::span<const int> y, int steps = 360000) {
    Eigen::Vector2d best{1, 0};
    double best_m = -1e300;
    for (int s = 0; s < steps; ++s) {
        const double th = 2.0 * std::numbers::pi * s / steps;
        const Eigen::Vector2d w{std::cos(th), std::sin(th)};
        double lo_pos = 1e300, hi_neg = -1e300;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double p = x.row(i).dot(w);
            if (y[static_cast<std::size_t>(i)] > 0) lo_pos = std::min(lo_pos, p);
            else hi_neg = std::max(hi_neg, p);
        }
        const double m = 0.5 * (lo_pos - hi_neg);
        if (m > best_m) {
            best_m = m;
            best = w;
        }
    }
    return {best, best_m};
}

struct LdaRef {
    VectorXd w;
    double b = 0.0;
};

/// Two-class LDA from explicit loops; same ridge rule as the library
/// (1e-6 times the mean diagonal of the pooled covariance).
inline LdaRef lda(const MatrixXd& x, std::span<const int> y) {
    const Eigen::Index d = x.cols();
    VectorXd m0 = VectorXd::Zero(d), m1 = VectorXd::Zero(d);
    double n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (y[static_cast<std::size_t>(i)] > 0) { m1 += x.row(i).transpose(); n1 += 1; }
        else { m0 += x.row(i).transpose(); n0 += 1; }
    }
    m0 /= n0;
    m1 /= n1;
    MatrixXd s = MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const VectorXd r = x.row(i).transpose() - (y[static_cast<std::size_t>(i)] > 0 ? m1 : m0);
        s += r * r.transpose();
    }
    s /= (n0 + n1 - 2.0);
    s.diagonal().array() += 1e-6 * s.trace() / static_cast<double>(d);
    LdaRef out;
    out.w = s.fullPivLu().solve(m1 - m0);
    out.b = -out.w.dot(0.5 * (m0 + m1)) + std::log(n1 / n0);
    return out;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double cost = 1e300;  // n_L gini_L + n_R gini_R
};

/// Best single Gini split by trying every feature and every midpoint.
inline Split best_gini_split(const MatrixXd& x, std::span<const int> y) {
    auto gini = [](double neg, double pos) {
        const double n = neg + pos;
        if (n == 0) return 0.0;
        const double p = pos / n;
        return 2.0 * p * (1.0 - p);
    };
    Split best;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::vector<double> v(x.col(f).data(), x.col(f).data() + x.rows());
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        for (std::size_t i = 0; i + 1 < v.size(); ++i) {
            const double thr = 0.5 * (v[i] + v[i + 1]);
            double ln = 0, lp = 0, rn = 0, rp = 0;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                const bool pos = y[static_cast<std::size_t>(r)] > 0;
                if (x(r, f) <= thr) (pos ? lp : ln) += 1;
                else (pos ? rp : rn) += 1;
            }
            const double cost = (ln + lp) * gini(ln, lp) + (rn + rp) * gini(rn, rp);
            if (cost < best.cost - 1e-12) best = {static_cast<int>(f), thr, cost};
        }
    }
    return best;
}

/// Welch power spectral density (Hann, 50% overlap), in power per bin.
inline std::vector<double> welch_psd(std::span<const double> x, int nfft) {
    std::vector<double> acc(static_cast<std::size_t>(nfft / 2 + 1), 0.0);
    std::vector<double> buf(static_cast<std::size_t>(nfft));
    std::vector<std::complex<double>> out(static_cast<std::size_t>(nfft / 2 + 1));
    fftw_plan p = fftw_plan_dft_r2c_1d(nfft, buf.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    int segs = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(nfft) <= x.size(); start += static_cast<std::size_t>(nfft / 2)) {
        for (int i = 0; i < nfft; ++i)
            buf[static_cast<std::size_t>(i)] =
                x[start + static_cast<std::size_t>(i)] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / nfft));
        fftw_execute(p);
        for (std::size_t b = 0; b < acc.size(); ++b) acc[b] += std::norm(out[b]);
        ++segs;
    }
    fftw_destroy_plan(p);
    for (double& a : acc) a /= std::max(segs, 1);
    return acc;
}

/// Lag (in samples) of the largest normalised autocorrelation peak within
/// [lo, hi].
inline std::size_t autocorr_peak(std::span<const double> x, std::size_t lo, std::size_t hi) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    std::size_t best = lo;
    double best_r = -1e300;
    for (std::size_t lag = lo; lag <= hi && lag < x.size(); ++lag) {
        double r = 0.0;
        for (std::size_t i = 0; i + lag < x.size(); ++i) r += (x[i] - mean) * (x[i + lag] - mean);
        r /= static_cast<double>(x.size() - lag);
        if (r > best_r) {
            best_r = r;
            best = lag;
        }
    }
    return best;
}

}  // namespace oracle
