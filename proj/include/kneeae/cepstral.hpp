#pragma once

#include "kneeae/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kneeae {

enum class CepstrumFlavor { mel, linear };

struct CepstraMatrix {
    Matrix values;  // T_f x N_B, column 0 is the 0th coefficient
    CepstrumFlavor flavor = CepstrumFlavor::mel;
};

inline constexpr double log_floor = 1e-10;

/// Orthonormal DCT-II matrix D (N x N): c = D x.
inline Matrix dct2_matrix(Eigen::Index n) {
    Matrix d(n, n);
    const double nn = static_cast<double>(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double s = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
        for (Eigen::Index m = 0; m < n; ++m)
            d(k, m) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(m) + 0.5) / nn);
    }
    return d;
}

/// Row-wise natural log (floored at 1e-10) followed by the orthonormal DCT-II.
inline CepstraMatrix cepstra(const Matrix& compressed, CepstrumFlavor flavor) {
    const Matrix logs = compressed.unaryExpr([](double x) { return std::log(std::max(x, log_floor)); });
    return {logs * dct2_matrix(compressed.cols()).transpose(), flavor};
}

}  // namespace kneeae
