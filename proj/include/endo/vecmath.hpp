// Dense double-precision vector helpers. Everything at desk scale is a
// flat std::vector<double>; no sparsity, no expression templates.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace endo {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& x, double alpha) {
    for (auto& xi : x) xi *= alpha;
}

inline Vec concat(const Vec& a, const Vec& b) {
    Vec out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

inline bool all_finite(const Vec& a) {
    return std::all_of(a.begin(), a.end(),
                       [](double x) { return std::isfinite(x); });
}

inline double mean_of(const Vec& a) {
    if (a.empty()) throw std::invalid_argument("mean_of: empty vector");
    return std::accumulate(a.begin(), a.end(), 0.0) /
           static_cast<double>(a.size());
}

inline double median_of(Vec a) {
    if (a.empty()) throw std::invalid_argument("median_of: empty vector");
    const std::size_t mid = a.size() / 2;
    std::nth_element(a.begin(), a.begin() + mid, a.end());
    double hi = a[mid];
    if (a.size() % 2 == 1) return hi;
    std::nth_element(a.begin(), a.begin() + mid - 1, a.end());
    return 0.5 * (a[mid - 1] + hi);
}

/// Sample standard deviation (n-1 denominator); 0 for n < 2.
inline double stddev_of(const Vec& a) {
    if (a.size() < 2) return 0.0;
    const double m = mean_of(a);
    double s = 0.0;
    for (double x : a) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(a.size() - 1));
}

inline double standard_error_of(const Vec& a) {
    return a.empty() ? 0.0 : stddev_of(a) / std::sqrt(static_cast<double>(a.size()));
}

inline void clip_inplace(Vec& v, const Vec& lo, const Vec& hi) {
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = std::clamp(v[i], lo[i], hi[i]);
}

/// Clip gradient to a maximum L2 norm; returns the applied scaling.
inline double clip_norm(Vec& g, double max_norm) {
    const double n = norm2(g);
    if (n <= max_norm || n == 0.0) return 1.0;
    const double s = max_norm / n;
    scale(g, s);
    return s;
}

/// Run fn(i) for i in [0, n). Tasks must be independent; with per-task
/// derived RNGs the result is identical for any worker count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace endo
