#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "errors.hpp"
#include "sparse.hpp"

namespace fbgcn {

struct EigenPairs {
    Vector values;   // non-increasing
    Dense vectors;   // n x k, orthonormal columns
};

struct LanczosOptions {
    double tol = 1e-10;
    std::uint64_t seed = 0;
    // Total Lanczos steps across restarts; <= 0 means 10 * n.
    std::int64_t max_iterations = 0;
    // Convergence is checked every this many steps.
    int check_every = 10;
};

namespace detail {

inline Vector random_unit(std::int64_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(n);
    for (std::int64_t i = 0; i < n; ++i) v[i] = g(rng);
    return v / v.norm();
}

// Two passes of classical Gram-Schmidt against the first `count` columns.
inline void orthogonalize(Vector& w, const Eigen::MatrixXd& basis, Eigen::Index count) {
    for (int pass = 0; pass < 2; ++pass) {
        const auto q = basis.leftCols(count);
        w.noalias() -= q * (q.transpose() * w);
    }
}

// Frobenius norm; an upper bound on the spectral norm used to scale tol.
inline double frobenius_norm(const SparseSym& m) {
    double s = 0.0;
    for (double v : m.csr().values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace detail

// Top-k eigenpairs of a symmetric sparse matrix by Lanczos with full
// reorthogonalization. An invariant Krylov subspace (beta ~ 0) triggers a
// restart from a fresh random vector orthogonal to the basis, which is how
// repeated eigenvalues are picked up. Ritz pairs are accepted once every
// residual |beta_m s_{m,i}| is <= tol * ||M||.
inline EigenPairs topk_eigs(const SparseSym& m, std::int64_t k, const LanczosOptions& opt = {}) {
    const std::int64_t n = m.n();
    if (k < 1 || k >= n) throw UsageError("topk_eigs requires 1 <= k < n");
    const std::int64_t cap = opt.max_iterations > 0 ? opt.max_iterations : 10 * n;
    const double scale = std::max(detail::frobenius_norm(m), 1e-300);
    const double target = opt.tol * scale;

    std::mt19937_64 rng(opt.seed);
    const Eigen::Index max_cols = std::min<std::int64_t>(n, cap) + 1;
    Eigen::MatrixXd basis(n, std::min<Eigen::Index>(max_cols, std::max<std::int64_t>(2 * k + 20, 64)));
    std::vector<double> alpha, beta;  // beta[j] couples step j and j+1

    Eigen::Index size = 0;
    basis.col(0) = detail::random_unit(n, rng);
    size = 1;
    double best = std::numeric_limits<double>::infinity();

    auto ritz = [&](Eigen::Index dim, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
        Eigen::VectorXd diag(dim), sub(std::max<Eigen::Index>(dim - 1, 0));
        for (Eigen::Index j = 0; j < dim; ++j) diag[j] = alpha[j];
        for (Eigen::Index j = 0; j + 1 < dim; ++j) sub[j] = beta[j];
        es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    };

    for (std::int64_t step = 0; step < cap; ++step) {
        const Eigen::Index j = size - 1;
        Vector q = basis.col(j);
        Vector w = spmv(m, q);
        const double a = q.dot(w);
        alpha.push_back(a);
        detail::orthogonalize(w, basis, size);
        double b = w.norm();

        const bool exhausted = size == n;
        const bool breakdown = !exhausted && b <= 1e-12 * scale;
        const bool check = exhausted || breakdown || (size >= k && (size % opt.check_every == 0));

        if (check && size >= k) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
            ritz(size, es);
            const double residual_beta = (exhausted || breakdown) ? 0.0 : b;
            double worst = 0.0;
            for (std::int64_t i = 0; i < k; ++i) {
                const Eigen::Index col = size - 1 - i;  // ascending order from Eigen
                worst = std::max(worst, std::abs(residual_beta * es.eigenvectors()(size - 1, col)));
            }
            best = std::min(best, worst);
            // A breakdown may hide eigenvalues outside the current invariant
            // subspace, so only accept there once the basis is complete.
            if (exhausted || (!breakdown && worst <= target)) {
                EigenPairs out;
                out.values.resize(k);
                out.vectors.resize(n, k);
                const Eigen::MatrixXd ritz_vectors = basis.leftCols(size) * es.eigenvectors().rightCols(k);
                for (std::int64_t i = 0; i < k; ++i) {
                    out.values[i] = es.eigenvalues()[size - 1 - i];
                    out.vectors.col(i) = ritz_vectors.col(k - 1 - i).normalized();
                }
                return out;
            }
        }
        if (exhausted) break;
        if (size == basis.cols()) basis.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(max_cols, 2 * size));

        if (breakdown) {
            Vector r = detail::random_unit(n, rng);
            detail::orthogonalize(r, basis, size);
            double rn = r.norm();
            if (rn <= 1e-8) break;
            basis.col(size) = r / rn;
            beta.push_back(0.0);
        } else {
            basis.col(size) = w / b;
            beta.push_back(b);
        }
        ++size;
    }
    throw SolverError("Lanczos did not converge within " + std::to_string(cap) + " steps", best);
}

}  // namespace fbgcn
