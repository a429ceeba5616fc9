// Shared test oracles. These stay independent of the library code paths
// they are used to check: finite differences for gradients, closed-form
// least squares for linear regression, and plain grid/enumeration search.

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "endo/vecmath.hpp"

namespace endo::testing {

/// Central finite-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec at,
                       double step = 1e-5) {
    Vec g(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double orig = at[i];
        at[i] = orig + step;
        const double fp = f(at);
        at[i] = orig - step;
        const double fm = f(at);
        at[i] = orig;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

/// Relative error between an analytic gradient and the FD oracle.
inline double grad_rel_error(const Vec& analytic, const Vec& fd) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = analytic[i] - fd[i];
        num += d * d;
        den += fd[i] * fd[i];
    }
    return std::sqrt(num) / (1.0 + std::sqrt(den));
}

/// Ordinary least squares via normal equations with Gaussian elimination.
/// Solves min_w sum_n (w . a_n - y_n)^2 and returns w (including any
/// intercept column the caller appended). Independent of the library's
/// gradient-descent trainer.
inline Vec least_squares(const std::vector<Vec>& rows, const Vec& y) {
    if (rows.empty() || rows.size() != y.size())
        throw std::invalid_argument("least_squares: bad inputs");
    const std::size_t d = rows.front().size();
    std::vector<Vec> G(d, Vec(d + 1, 0.0)); // [A | b] augmented
    for (std::size_t n = 0; n < rows.size(); ++n) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) G[i][j] += rows[n][i] * rows[n][j];
            G[i][d] += rows[n][i] * y[n];
        }
    }
    for (std::size_t i = 0; i < d; ++i) G[i][i] += 1e-12; // ridge jitter
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(G[r][col]) > std::abs(G[piv][col])) piv = r;
        std::swap(G[col], G[piv]);
        for (std::size_t r = 0; r < d; ++r) {
            if (r == col || G[col][col] == 0.0) continue;
            const double m = G[r][col] / G[col][col];
            for (std::size_t c = col; c <= d; ++c) G[r][c] -= m * G[col][c];
        }
    }
    Vec w(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        w[i] = G[i][i] != 0.0 ? G[i][d] / G[i][i] : 0.0;
    return w;
}

inline double least_squares_objective(const std::vector<Vec>& rows, const Vec& y,
                                      const Vec& w) {
    double s = 0.0;
    for (std::size_t n = 0; n < rows.size(); ++n) {
        const double r = dot(rows[n], w) - y[n];
        s += r * r;
    }
    return s;
}

} // namespace endo::testing
