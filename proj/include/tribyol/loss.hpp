#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tribyol/error.hpp"
#include "tribyol/tensor.hpp"

// Normalized view-prediction loss: per pair of embeddings
//   L(q, z) = 2 - 2 * <q, z> / (|q| * |z|)
// which equals |q/|q| - z/|z||^2. The cosine form is what runs; the
// squared-norm form is kept as an independent oracle in the tests.
// The triple-view loss sums the pair losses against both targets.

namespace tribyol::loss {

constexpr double kNormEps = 1e-12;

namespace detail {

template <typename Real>
double dot_acc(std::span<const Real> a, std::span<const Real> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += (double)a[i] * (double)b[i];
    return acc;
}

template <typename Real>
double checked_norm(std::span<const Real> v, const char* who) {
    if (v.empty()) throw DimensionError(std::string(who) + ": empty embedding");
    double n = std::sqrt(dot_acc(v, v));
    if (!std::isfinite(n))
        throw DegenerateEmbeddingError(std::string(who) + ": non-finite embedding");
    if (n <= kNormEps)
        throw DegenerateEmbeddingError(std::string(who) +
                                       ": embedding norm below guard (collapse?)");
    return n;
}

template <typename Real>
void check_pair(std::span<const Real> q, std::span<const Real> z, const char* who) {
    if (q.size() != z.size())
        throw DimensionError(std::string(who) + ": embedding length mismatch " +
                             std::to_string(q.size()) + " vs " + std::to_string(z.size()));
}

} // namespace detail

template <typename Real>
std::vector<Real> normalize(std::span<const Real> v) {
    double n = detail::checked_norm(v, "normalize");
    std::vector<Real> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = (Real)((double)v[i] / n);
    return out;
}

template <typename Real>
Real pairwise_view_loss(std::span<const Real> q, std::span<const Real> z) {
    detail::check_pair(q, z, "pairwise_view_loss");
    double nq = detail::checked_norm(q, "pairwise_view_loss(q)");
    double nz = detail::checked_norm(z, "pairwise_view_loss(z)");
    double c = detail::dot_acc(q, z) / (nq * nz);
    return (Real)(2.0 - 2.0 * c);
}

template <typename Real>
Real triple_view_loss(std::span<const Real> q1, std::span<const Real> z2,
                      std::span<const Real> z3) {
    return pairwise_view_loss(q1, z2) + pairwise_view_loss(q1, z3);
}

// d/dq of pairwise_view_loss(q, z) = (-2/|q|) * (zhat - <qhat, zhat> qhat).
// z acts as a constant (the target side is behind stop-gradient).
template <typename Real>
std::vector<Real> pairwise_view_loss_grad_q(std::span<const Real> q,
                                            std::span<const Real> z) {
    detail::check_pair(q, z, "pairwise_view_loss_grad_q");
    double nq = detail::checked_norm(q, "pairwise_view_loss_grad_q(q)");
    double nz = detail::checked_norm(z, "pairwise_view_loss_grad_q(z)");
    double cos_qz = detail::dot_acc(q, z) / (nq * nz);
    std::vector<Real> g(q.size());
    for (size_t i = 0; i < q.size(); ++i) {
        double qhat = (double)q[i] / nq;
        double zhat = (double)z[i] / nz;
        g[i] = (Real)((-2.0 / nq) * (zhat - cos_qz * qhat));
    }
    return g;
}

namespace detail {

inline void check_batch(const Tensor& t, const char* who) {
    if (t.rank() != 2)
        throw DimensionError(std::string(who) + ": want a [B, d] tensor, got " + t.shape_str());
    if (t.dim(0) < 1) throw Error(std::string(who) + ": empty batch");
}

inline void check_batch_pair(const Tensor& a, const Tensor& b, const char* who) {
    check_batch(a, who);
    check_batch(b, who);
    if (a.dim(0) != b.dim(0))
        throw DimensionError(std::string(who) + ": batch size mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
    if (a.dim(1) != b.dim(1))
        throw DimensionError(std::string(who) + ": embedding width mismatch " +
                             a.shape_str() + " vs " + b.shape_str());
}

} // namespace detail

// Mean over the batch of pairwise_view_loss(Q[i], Z[i]), scaled by `scale`.
// If grad_q is non-null, accumulates scale * d(mean loss)/dQ into it.
inline double batch_pairwise_loss(const Tensor& Q, const Tensor& Z, double scale = 1.0,
                                  Tensor* grad_q = nullptr) {
    detail::check_batch_pair(Q, Z, "batch_pairwise_loss");
    if (grad_q) check_same_shape(*grad_q, Q, "batch_pairwise_loss(grad)");
    const int64_t b = Q.dim(0), d = Q.dim(1);
    const double inv_b = 1.0 / (double)b;
    double total = 0.0;
    for (int64_t i = 0; i < b; ++i) {
        std::span<const float> q(Q.data() + i * d, (size_t)d);
        std::span<const float> z(Z.data() + i * d, (size_t)d);
        total += (double)pairwise_view_loss(q, z);
        if (grad_q) {
            auto g = pairwise_view_loss_grad_q(q, z);
            float* gq = grad_q->data() + i * d;
            for (int64_t j = 0; j < d; ++j) gq[j] += (float)(scale * inv_b * g[j]);
        }
    }
    return scale * inv_b * total;
}

// Mean over the batch of triple_view_loss(Q1[i], Z2[i], Z3[i]).
inline double batch_loss(const Tensor& Q1, const Tensor& Z2, const Tensor& Z3,
                         Tensor* grad_q1 = nullptr) {
    detail::check_batch_pair(Q1, Z2, "batch_loss");
    detail::check_batch_pair(Q1, Z3, "batch_loss");
    return batch_pairwise_loss(Q1, Z2, 1.0, grad_q1) +
           batch_pairwise_loss(Q1, Z3, 1.0, grad_q1);
}

} // namespace tribyol::loss
