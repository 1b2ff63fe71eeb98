#pragma once

#include <cmath>
#include <vector>

#include "tribyol/loss.hpp"
#include "tribyol/tensor.hpp"

namespace tribyol {

// Collapse means the network emits (nearly) the same embedding for every
// input. We L2-normalize each row and look at the spread per dimension; a
// healthy embedding spread over the unit sphere has per-dimension std around
// 1/sqrt(d), a collapsed one is near zero.
struct CollapseReport {
    bool collapsed = false;
    double mean_std = 0.0;
    double threshold = 0.0;
    std::vector<double> per_dim_std;
};

inline double default_collapse_threshold(int64_t dim) {
    return 0.01 / std::sqrt((double)dim);
}

inline CollapseReport detect_collapse(const Tensor& z, double threshold = -1.0) {
    if (z.rank() != 2) throw DimensionError("detect_collapse: want [B, d]");
    const int64_t b = z.dim(0), d = z.dim(1);
    if (b < 2) throw Error("detect_collapse: need at least 2 embeddings");
    if (threshold < 0.0) threshold = default_collapse_threshold(d);

    std::vector<double> mean(d, 0.0), sq(d, 0.0);
    std::vector<double> row(d);
    for (int64_t i = 0; i < b; ++i) {
        const float* p = z.data() + i * d;
        double norm = 0.0;
        for (int64_t j = 0; j < d; ++j) norm += (double)p[j] * p[j];
        norm = std::sqrt(norm);
        // A zero row is itself a collapse symptom; keep it as all zeros so it
        // drags the spread down instead of throwing here.
        const double inv = norm > loss::kNormEps ? 1.0 / norm : 0.0;
        for (int64_t j = 0; j < d; ++j) {
            row[j] = p[j] * inv;
            mean[j] += row[j];
            sq[j] += row[j] * row[j];
        }
    }
    CollapseReport rep;
    rep.threshold = threshold;
    rep.per_dim_std.resize(d);
    double total = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        const double m = mean[j] / b;
        double var = sq[j] / b - m * m;
        if (var < 0.0) var = 0.0;
        rep.per_dim_std[j] = std::sqrt(var);
        total += rep.per_dim_std[j];
    }
    rep.mean_std = total / (double)d;
    rep.collapsed = rep.mean_std < threshold;
    return rep;
}

} // namespace tribyol
