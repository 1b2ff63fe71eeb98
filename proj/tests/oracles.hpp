#pragma once

// Independent test oracles. These deliberately avoid the library's runtime
// code paths: the squared-norm loss form, brute-force reductions and finite
// differences live here and nowhere else.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracles {

// |q/|q| - z/|z||^2, the squared-norm form of the pairwise view loss.
inline double pairwise_loss_sqnorm(std::span<const double> q, std::span<const double> z) {
    double nq = 0.0, nz = 0.0;
    for (double v : q) nq += v * v;
    for (double v : z) nz += v * v;
    nq = std::sqrt(nq);
    nz = std::sqrt(nz);
    if (nq == 0.0 || nz == 0.0) throw std::runtime_error("sqnorm oracle: zero norm");
    double acc = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
        const double d = q[i] / nq - z[i] / nz;
        acc += d * d;
    }
    return acc;
}

// Central finite differences of a scalar function of a vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double step) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double hi = f(x);
        x[i] = orig - step;
        const double lo = f(x);
        x[i] = orig;
        g[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

inline double l2(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline double rel_error(std::span<const double> got, std::span<const double> want) {
    double diff = 0.0, ref = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
        const double d = got[i] - want[i];
        diff += d * d;
        ref += want[i] * want[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

} // namespace oracles
