#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"
#include "gcn.hpp"
#include "perturb.hpp"
#include "sparse.hpp"
#include "spectral.hpp"

// Dense, test-scale implementations of the extrinsic Fisher information of
// a GCN and of the observed Fisher information of a similarity embedding.

namespace fbgcn {

namespace detail {

// Per-sample dense backprop state for sample `i` under -log p(y_i | ...).
struct SampleErrors {
    Dense e2;  // d l_i / d Z2 (pre-softmax logits)
    Dense e1;  // d l_i / d Z1 (pre-relu)
};

struct DenseForward {
    Dense h0;      // X
    Dense xw;      // X W1
    Dense z1;      // A X W1
    Dense h1;      // relu(z1)
    Dense hw;      // H1 W2
    Dense logits;  // A H1 W2
};

inline DenseForward dense_forward(const GcnModel& model, const Dense& a, const Dense& x) {
    DenseForward f;
    f.h0 = x;
    f.xw = x * model.W1;
    f.z1 = a * f.xw;
    f.h1 = f.z1.cwiseMax(0.0);
    f.hw = f.h1 * model.W2;
    f.logits = a * f.hw;
    return f;
}

inline SampleErrors sample_errors(const GcnModel& model, const Dense& a, const DenseForward& f, std::int64_t i, int label) {
    SampleErrors s;
    s.e2 = Dense::Zero(f.logits.rows(), f.logits.cols());
    const double m = f.logits.row(i).maxCoeff();
    Eigen::RowVectorXd p = (f.logits.row(i).array() - m).exp();
    p /= p.sum();
    p[label] -= 1.0;
    s.e2.row(i) = p;
    s.e1 = (a.transpose() * s.e2 * model.W2.transpose()).cwiseProduct((f.z1.array() > 0.0).cast<double>().matrix());
    return s;
}

inline Dense symmetrize(const Dense& g) { return 0.5 * (g + g.transpose()); }

}  // namespace detail

// d A_tilde / d t along phi = t * direction, evaluated at phi = 0:
// -tr(L) U_bar diag(J_softmax(theta_bar) direction) U_bar^T.
inline Dense adjacency_direction(const SpectralBasis& basis, const Vector& direction) {
    if (direction.size() != basis.k) throw UsageError("adjacency_direction: direction must have length k");
    const Vector s = softmax(basis.theta_bar);
    const Vector ddelta = s.cwiseProduct((direction.array() - s.dot(direction)).matrix());
    return -basis.trace_L * basis.U_bar * ddelta.asDiagonal() * basis.U_bar.transpose();
}

struct ExtrinsicFim {
    double value = 0.0;        // (1/N) sum_i (d l_i / d phi)^2
    Vector per_sample;         // d l_i / d phi, one per sample
};

// Extrinsic Fisher information along a scalar spectral direction. Each
// per-sample derivative is sum_l tr(H^l W^l E_{l+1}^T dA) with E the error
// at the pre-activation of layer l+1, and d l / dA symmetrized before the
// contraction.
inline ExtrinsicFim extrinsic_fim_phi(const GcnModel& model, const SparseSym& a_tilde, const CsrMatrix& features,
                                      std::span<const int> labels, std::span<const std::int64_t> samples,
                                      const SpectralBasis& basis, const Vector& direction) {
    if (samples.empty()) throw UsageError("extrinsic_fim_phi: no samples");
    const Dense a = a_tilde.to_dense();
    const Dense da = adjacency_direction(basis, direction);
    const auto f = detail::dense_forward(model, a, features.to_dense());
    ExtrinsicFim out;
    out.per_sample.resize(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto i = samples[s];
        const auto err = detail::sample_errors(model, a, f, i, labels[i]);
        // d l_i / d A from both layers, as n x n matrices.
        const Dense grad_a = err.e2 * f.hw.transpose() + err.e1 * f.xw.transpose();
        out.per_sample[static_cast<Eigen::Index>(s)] = detail::symmetrize(grad_a).cwiseProduct(da).sum();
    }
    out.value = out.per_sample.squaredNorm() / static_cast<double>(samples.size());
    return out;
}

// Per-sample weight gradients of layer `layer` (1 or 2), each flattened
// row-major, as the rows of an N x (d_l * d_{l+1}) matrix.
inline Dense per_sample_weight_gradients(const GcnModel& model, const SparseSym& a_tilde, const CsrMatrix& features,
                                         std::span<const int> labels, std::span<const std::int64_t> samples, int layer) {
    if (layer != 1 && layer != 2) throw UsageError("layer must be 1 or 2");
    const Dense a = a_tilde.to_dense();
    const auto f = detail::dense_forward(model, a, features.to_dense());
    const Dense& w = layer == 1 ? model.W1 : model.W2;
    Dense rows(static_cast<Eigen::Index>(samples.size()), w.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto i = samples[s];
        const auto err = detail::sample_errors(model, a, f, i, labels[i]);
        // (E^T A H)^T = H^T A^T E
        const Dense g = layer == 1 ? Dense(f.h0.transpose() * a.transpose() * err.e1)
                                   : Dense(f.h1.transpose() * a.transpose() * err.e2);
        rows.row(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), g.size());
    }
    return rows;
}

// (1/N) sum_i vec(g_i) vec(g_i)^T over per-sample layer gradients.
inline Dense extrinsic_fim_weights(const GcnModel& model, const SparseSym& a_tilde, const CsrMatrix& features,
                                   std::span<const int> labels, std::span<const std::int64_t> samples, int layer) {
    if (samples.empty()) throw UsageError("extrinsic_fim_weights: no samples");
    const Dense g = per_sample_weight_gradients(model, a_tilde, features, labels, samples, layer);
    return (g.transpose() * g) / static_cast<double>(samples.size());
}

// Similarity matrix W (row-stochastic, zero diagonal) with a latent
// embedding Y, p_ij = exp(-|y_i - y_j|^2) / Z_i over j != i.
struct EmbeddingProblem {
    Dense W;
    Dense Y;

    void validate() const {
        if (W.rows() != W.cols() || W.rows() != Y.rows()) throw UsageError("EmbeddingProblem: shape mismatch");
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            if (W(i, i) != 0.0) throw UsageError("EmbeddingProblem: W diagonal must be zero");
            if (std::abs(W.row(i).sum() - 1.0) > 1e-12) throw UsageError("EmbeddingProblem: W rows must sum to 1");
            if ((W.row(i).array() < 0.0).any()) throw UsageError("EmbeddingProblem: W must be nonnegative");
        }
    }
};

inline Dense squared_distances(const Dense& y) {
    const auto n = y.rows();
    Dense d(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (y.row(i) - y.row(j)).squaredNorm();
    return d;
}

// Row-wise log p_ij; the diagonal is -inf.
inline Dense log_similarity_model(const Dense& y) {
    const Dense d = squared_distances(y);
    const auto n = y.rows();
    Dense lp(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) m = std::min(m, d(i, j));
        double z = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) z += std::exp(-(d(i, j) - m));
        const double log_z = -m + std::log(z);
        for (Eigen::Index j = 0; j < n; ++j) lp(i, j) = j == i ? -std::numeric_limits<double>::infinity() : -d(i, j) - log_z;
    }
    return lp;
}

inline Dense similarity_model(const Dense& y) { return log_similarity_model(y).array().exp().matrix(); }

// KL(W : P(Y)) = sum_ij w_ij log(w_ij / p_ij), with 0 log(0 / .) = 0.
inline double kl_stress(const EmbeddingProblem& prob) {
    prob.validate();
    const Dense lp = log_similarity_model(prob.Y);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < prob.W.rows(); ++i)
        for (Eigen::Index j = 0; j < prob.W.cols(); ++j)
            if (prob.W(i, j) > 0.0) kl += prob.W(i, j) * (std::log(prob.W(i, j)) - lp(i, j));
    return kl;
}

// Laplacian of the symmetrized (possibly indefinite) weights (A + A^T) / 2.
inline Dense symmetric_laplacian(const Dense& a) {
    const Dense s = 0.5 * (a + a.transpose());
    Dense l = -s;
    l.diagonal() += s.rowwise().sum();
    return l;
}

// d KL / d Y = 4 L_sym(W - P(Y)) Y.
inline Dense embedding_gradient(const EmbeddingProblem& prob) {
    prob.validate();
    return 4.0 * symmetric_laplacian(prob.W - similarity_model(prob.Y)) * prob.Y;
}

// Hessian block of KL w.r.t. column `dim` of Y:
// 4 L_sym(W - P) + 8 L_sym(P o D^dim) - 4 B^T B.
inline Dense embedding_observed_fim(const EmbeddingProblem& prob, Eigen::Index dim) {
    prob.validate();
    if (dim < 0 || dim >= prob.Y.cols()) throw UsageError("embedding_observed_fim: dimension index out of range");
    const auto n = prob.Y.rows();
    const Dense p = similarity_model(prob.Y);
    Dense pd(n, n), b = Dense::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double diff = prob.Y(i, dim) - prob.Y(j, dim);
            pd(i, j) = p(i, j) * diff * diff;
            if (j != i) {
                b(i, j) = -p(i, j) * diff;
                b(i, i) += p(i, j) * diff;
            }
        }
    }
    Dense h = 4.0 * symmetric_laplacian(prob.W - p) + 8.0 * symmetric_laplacian(pd) - 4.0 * b.transpose() * b;
    return detail::symmetrize(h);
}

}  // namespace fbgcn
