#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dataset.hpp"
#include "errors.hpp"
#include "lanczos.hpp"
#include "laplacian.hpp"
#include "sparse.hpp"

namespace fbgcn {

namespace detail {

inline Vector log_of(const Vector& v) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
    return out;
}

}  // namespace detail

// Rank-k Bures projection of a density matrix: U_bar diag(lambda_bar) U_bar^T
// with lambda_bar rescaled to unit sum and theta_bar = log(lambda_bar).
struct SpectralBasis {
    std::int64_t k = 0;
    Dense U_bar;        // n x k
    Vector lambda_bar;  // non-increasing, sums to 1
    Vector theta_bar;
    double trace_L = 0.0;

    std::int64_t n() const { return U_bar.rows(); }
};

inline SpectralBasis lowrank_project(const Vector& values, const Dense& vectors, std::int64_t k) {
    if (k < 1 || k > values.size() || vectors.cols() < k) throw UsageError("lowrank_project: bad rank k");
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < 0.0) throw DomainError("lowrank_project: negative eigenvalue");
        if (i > 0 && values[i] > values[i - 1]) throw UsageError("lowrank_project: values must be non-increasing");
    }
    if (!(values[k - 1] > 0.0)) throw DomainError("lowrank_project: rank-deficient, lambda_k = 0");

    SpectralBasis b;
    b.k = k;
    b.U_bar = vectors.leftCols(k);
    const double total = values.head(k).sum();
    b.lambda_bar = values.head(k) / total;
    b.theta_bar = detail::log_of(b.lambda_bar);
    return b;
}

// Renormalized adjacency -> Laplacian -> density matrix -> top-k Lanczos ->
// rank-k projection. Computed once before training.
inline SpectralBasis compute_spectral_basis(const SparseSym& normalized_adjacency, std::int64_t k,
                                            const LanczosOptions& opt = {}) {
    const Laplacian lap = laplacian_of(normalized_adjacency);
    const SparseSym rho = density_matrix(lap);
    const EigenPairs eig = topk_eigs(rho, k, opt);
    SpectralBasis b = lowrank_project(eig.values, eig.vectors, k);
    b.trace_L = lap.trace;
    return b;
}

// Dense symmetric eigendecomposition sorted non-increasing.
inline EigenPairs dense_eigh(const Dense& m) {
    const Eigen::MatrixXd dense = m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    const auto n = m.rows();
    EigenPairs out{Vector(n), Dense(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values[i] = es.eigenvalues()[n - 1 - i];
        out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

inline double min_eigenvalue(const Dense& m) {
    const Eigen::MatrixXd dense = m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

namespace detail {

// Principal square root of a PSD matrix; eigenvalues in [-1e-10, 0) are
// clamped to zero, anything more negative is a domain error.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    // Rounding-level eigenvalues would otherwise contribute O(sqrt(eps)).
    const double noise = static_cast<double>(ev.size()) * std::numeric_limits<double>::epsilon() *
                         std::max(ev.cwiseAbs().maxCoeff(), 1.0);
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-10) throw DomainError("matrix is not positive semidefinite (eigenvalue " + std::to_string(ev[i]) + ")");
        ev[i] = ev[i] <= noise ? 0.0 : std::sqrt(ev[i]);
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}


}  // namespace detail

// D_B^2 = 2 (1 - tr sqrt(rho1^{1/2} rho2 rho1^{1/2})). Dense, test scale.
inline double bures_distance(const Dense& rho1, const Dense& rho2) {
    if (rho1.rows() != rho2.rows() || rho1.rows() != rho1.cols() || rho2.rows() != rho2.cols())
        throw UsageError("bures_distance: shape mismatch");
    // tr sqrt(s1 rho2 s1) is the nuclear norm of s1 s2; the SVD form avoids
    // square roots of tiny eigenvalues.
    const Eigen::MatrixXd s1 = detail::psd_sqrt(rho1);
    const Eigen::MatrixXd s2 = detail::psd_sqrt(rho2);
    const double fidelity_root = Eigen::JacobiSVD<Eigen::MatrixXd>(s1 * s2).singularValues().sum();
    return std::sqrt(std::max(0.0, 2.0 * (1.0 - fidelity_root)));
}

// sqrt(2 (1 - sum_i sqrt(p_i q_i))), the Bures distance of diag(p) and diag(q).
inline double hellinger_distance(const Vector& p, const Vector& q) {
    if (p.size() != q.size()) throw UsageError("hellinger_distance: length mismatch");
    double bc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) bc += std::sqrt(p[i] * q[i]);
    return std::sqrt(std::max(0.0, 2.0 * (1.0 - bc)));
}

struct BuresTraces {
    double tr_G_lambda = 0.0;
    Vector tr_G_u;  // one per eigenvector
    double tr_G_U = 0.0;
};

// Closed-form traces of the eigenvalue and eigenvector blocks of the Bures
// metric. Requires a strictly positive spectrum.
inline BuresTraces bures_trace_diagnostics(const Vector& lambda) {
    const auto n = lambda.size();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(lambda[i] > 0.0)) throw DomainError("bures_trace_diagnostics: eigenvalues must be positive");
    BuresTraces t;
    t.tr_G_lambda = 0.25 * lambda.cwiseInverse().sum() * lambda.sum();
    t.tr_G_u = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = lambda[i] - lambda[j];
            s += d * d / (lambda[i] + lambda[j]);
        }
        t.tr_G_u[i] = 0.5 * s;
    }
    t.tr_G_U = t.tr_G_u.sum();
    return t;
}

// Entropy of lambda^omega / sum(lambda^omega), with 0 log 0 = 0.
inline double von_neumann_entropy(const Vector& lambda, double omega = 1.0) {
    if (omega < 1.0) throw UsageError("von_neumann_entropy: omega must be >= 1");
    Vector p(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda[i] < 0.0) throw DomainError("von_neumann_entropy: negative eigenvalue");
        p[i] = std::pow(lambda[i], omega);
    }
    const double z = p.sum();
    if (!(z > 0.0)) throw DomainError("von_neumann_entropy: zero spectrum");
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pi = p[i] / z;
        if (pi > 0.0) h -= pi * std::log(pi);
    }
    return h;
}

// Text artifact: "k n trace_L", then the k values of lambda_bar, then n
// rows of U_bar. Numbers use shortest round-trip formatting.
inline void write_basis(const SpectralBasis& b, std::ostream& out) {
    auto num = [](double v) { return detail::format_double(v); };
    out << b.k << ' ' << b.n() << ' ' << num(b.trace_L) << '\n';
    for (std::int64_t i = 0; i < b.k; ++i) out << (i ? " " : "") << num(b.lambda_bar[i]);
    out << '\n';
    for (std::int64_t r = 0; r < b.n(); ++r) {
        for (std::int64_t c = 0; c < b.k; ++c) out << (c ? " " : "") << num(b.U_bar(r, c));
        out << '\n';
    }
}

inline SpectralBasis read_basis(const std::filesystem::path& path) {
    detail::LineReader r(path);
    std::vector<std::string_view> f;
    if (!r.next(f) || f.size() != 3) r.fail("expected 'k n trace_L'");
    SpectralBasis b;
    b.k = r.to_int(f[0]);
    const auto n = r.to_int(f[1]);
    b.trace_L = r.to_double(f[2]);
    if (b.k < 1 || n <= b.k) r.fail("invalid k / n");
    if (!r.next(f) || static_cast<std::int64_t>(f.size()) != b.k) r.fail("expected k eigenvalues");
    b.lambda_bar.resize(b.k);
    for (std::int64_t i = 0; i < b.k; ++i) b.lambda_bar[i] = r.to_double(f[i]);
    b.theta_bar = detail::log_of(b.lambda_bar);
    b.U_bar.resize(n, b.k);
    for (std::int64_t row = 0; row < n; ++row) {
        if (!r.next(f) || static_cast<std::int64_t>(f.size()) != b.k) r.fail("expected k vector entries");
        for (std::int64_t c = 0; c < b.k; ++c) b.U_bar(row, c) = r.to_double(f[c]);
    }
    return b;
}

}  // namespace fbgcn
