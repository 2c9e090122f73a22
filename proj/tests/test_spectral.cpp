#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "test_util.hpp"

using namespace fbgcn;
using fbgcn::testing::random_adjacency;
using fbgcn::testing::random_density;
using fbgcn::testing::random_simplex;
using fbgcn::testing::subspace_sine;

namespace {

double max_residual(const SparseSym& m, const EigenPairs& e) {
    Dense d = m.to_dense();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i)
        worst = std::max(worst, (d * e.vectors.col(i) - e.values[i] * e.vectors.col(i)).norm());
    return worst;
}

double orthonormality_error(const Dense& v) {
    return (v.transpose() * v - Dense::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
}

SparseSym disjoint_union(const std::vector<SparseSym>& parts) {
    std::vector<Triplet> t;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        for (std::int64_t i = 0; i < p.n(); ++i) {
            auto cols = p.csr().row_cols(i);
            auto vals = p.csr().row_values(i);
            for (std::size_t q = 0; q < cols.size(); ++q)
                if (cols[q] > i) t.push_back({off + i, off + cols[q], vals[q]});
        }
        off += p.n();
    }
    return SparseSym::from_upper_triplets(off, t);
}

}  // namespace

TEST(Lanczos, TwoByTwo) {
    auto m = SparseSym::from_dense(Dense{{0.5, -0.5}, {-0.5, 0.5}});
    auto e = topk_eigs(m, 1);
    EXPECT_NEAR(e.values[0], 1.0, 1e-12);
    EXPECT_NEAR(std::abs(e.vectors(0, 0)), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(e.vectors(0, 0), -e.vectors(1, 0), 1e-12);
}

TEST(Lanczos, IdentityFindsRepeatedEigenvalue) {
    auto e = topk_eigs(SparseSym::identity(6), 2);
    EXPECT_NEAR(e.values[0], 1.0, 1e-12);
    EXPECT_NEAR(e.values[1], 1.0, 1e-12);
    EXPECT_LT(orthonormality_error(e.vectors), 1e-12);
}

TEST(Lanczos, MatchesDenseOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_adjacency(50, 0.1, rng, trial % 2);
        auto rho = density_matrix(laplacian_of(renormalize_adjacency(a)));
        const std::int64_t k = 1 + trial % 7;
        auto e = topk_eigs(rho, k, {1e-12, static_cast<std::uint64_t>(trial)});
        auto oracle = dense_eigh(rho.to_dense());
        for (std::int64_t i = 0; i < k; ++i) EXPECT_NEAR(e.values[i], oracle.values[i], 1e-9);
        EXPECT_LT(orthonormality_error(e.vectors), 1e-10);
        // Compare subspaces only where the k-th value is separated.
        if (oracle.values[k - 1] - oracle.values[k] > 1e-6) {
            EXPECT_LT(subspace_sine(e.vectors, oracle.vectors.leftCols(k)), 1e-8) << "trial " << trial;
        }
        EXPECT_LE(max_residual(rho, e), 1e-9);
    }
}

TEST(Lanczos, DisconnectedGraphWithRepeatedEigenvalues) {
    auto k4 = synthetic_graph(GraphKind::complete, 4, 0).adjacency;
    auto p5 = synthetic_graph(GraphKind::path, 5, 0).adjacency;
    auto g = disjoint_union({k4, k4, k4, p5});
    auto rho = density_matrix(laplacian_of(renormalize_adjacency(g)));
    auto oracle = dense_eigh(rho.to_dense());
    for (std::int64_t k : {3, 9, 11}) {
        auto e = topk_eigs(rho, k);
        for (std::int64_t i = 0; i < k; ++i) EXPECT_NEAR(e.values[i], oracle.values[i], 1e-9) << k << ' ' << i;
        EXPECT_LT(orthonormality_error(e.vectors), 1e-10);
        EXPECT_LE(max_residual(rho, e), 1e-9);
    }
}

TEST(Lanczos, DeterministicForSeed) {
    std::mt19937_64 rng(2);
    auto a = random_adjacency(80, 0.05, rng);
    auto rho = density_matrix(laplacian_of(renormalize_adjacency(a)));
    auto e1 = topk_eigs(rho, 5, {1e-10, 9});
    auto e2 = topk_eigs(rho, 5, {1e-10, 9});
    EXPECT_EQ(e1.values, e2.values);
    EXPECT_EQ(e1.vectors, e2.vectors);
}

TEST(Lanczos, RejectsBadRankAndReportsNonConvergence) {
    EXPECT_THROW(topk_eigs(SparseSym::identity(3), 0), UsageError);
    EXPECT_THROW(topk_eigs(SparseSym::identity(3), 3), UsageError);
    std::mt19937_64 rng(6);
    auto a = random_adjacency(60, 0.1, rng);
    auto rho = density_matrix(laplacian_of(renormalize_adjacency(a)));
    LanczosOptions opt;
    opt.tol = 1e-15;
    opt.max_iterations = 8;
    opt.check_every = 2;
    try {
        topk_eigs(rho, 4, opt);
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_GT(e.best_residual(), 0.0);
    }
}

TEST(LowRank, Examples) {
    Dense v = Dense::Identity(3, 3);
    auto b = lowrank_project(Vector{{0.5, 0.3, 0.2}}, v, 2);
    EXPECT_DOUBLE_EQ(b.lambda_bar[0], 0.625);
    EXPECT_DOUBLE_EQ(b.lambda_bar[1], 0.375);
    EXPECT_EQ(b.theta_bar[0], std::log(b.lambda_bar[0]));
    EXPECT_EQ(b.U_bar.cols(), 2);

    auto full = lowrank_project(Vector{{0.5, 0.3, 0.2}}, v, 3);
    EXPECT_NEAR(full.lambda_bar[2], 0.2, 1e-16);

    EXPECT_THROW(lowrank_project(Vector{{1.0, 0.0}}, Dense::Identity(2, 2), 2), DomainError);
    EXPECT_THROW(lowrank_project(Vector{{0.2, 0.8}}, Dense::Identity(2, 2), 1), UsageError);
}

TEST(LowRank, MinimizesBuresDistanceOverEigenvalueSubsets) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Vector lambda;
        Dense q;
        Dense rho = random_density(6, rng, &lambda, &q);
        for (std::int64_t k = 1; k <= 3; ++k) {
            auto b = lowrank_project(lambda, q, k);
            Dense proj = b.U_bar * b.lambda_bar.asDiagonal() * b.U_bar.transpose();
            const double got = bures_distance(rho, proj);
            double best = std::numeric_limits<double>::infinity();
            std::vector<int> pick(6, 0);
            std::fill(pick.end() - k, pick.end(), 1);
            do {
                Dense cand = Dense::Zero(6, 6);
                double total = 0.0;
                for (int i = 0; i < 6; ++i)
                    if (pick[i]) {
                        cand += lambda[i] * q.col(i) * q.col(i).transpose();
                        total += lambda[i];
                    }
                best = std::min(best, bures_distance(rho, cand / total));
            } while (std::next_permutation(pick.begin(), pick.end()));
            EXPECT_LE(got, best + 1e-9) << "trial " << trial << " k " << k;
        }
    }
}

TEST(Bures, Examples) {
    std::mt19937_64 rng(1);
    Dense rho = random_density(5, rng);
    EXPECT_NEAR(bures_distance(rho, rho), 0.0, 1e-7);
    Dense a{{1.0, 0.0}, {0.0, 0.0}}, b{{0.0, 0.0}, {0.0, 1.0}};
    EXPECT_NEAR(bures_distance(a, b), std::sqrt(2.0), 1e-12);
    EXPECT_THROW(bures_distance(a, Dense{{1.5, 0.0}, {0.0, -0.5}}), DomainError);
}

TEST(Bures, ReducesToHellingerOnCommutingPairs) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Vector p = random_simplex(7, rng), q = random_simplex(7, rng);
        Dense dp = p.asDiagonal(), dq = q.asDiagonal();
        EXPECT_NEAR(bures_distance(dp, dq), hellinger_distance(p, q), 1e-12);
    }
}

TEST(Bures, SymmetricAndTriangleInequality) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        Dense a = random_density(5, rng), b = random_density(5, rng), c = random_density(5, rng);
        EXPECT_NEAR(bures_distance(a, b), bures_distance(b, a), 1e-9);
        EXPECT_LE(bures_distance(a, c), bures_distance(a, b) + bures_distance(b, c) + 1e-9);
        EXPECT_GT(bures_distance(a, b), 0.0);
    }
}

TEST(TraceDiagnostics, Examples) {
    auto u = bures_trace_diagnostics(Vector::Constant(5, 0.2));
    EXPECT_NEAR(u.tr_G_lambda, 25.0 / 4.0, 1e-12);
    EXPECT_EQ(u.tr_G_U, 0.0);
    auto t = bures_trace_diagnostics(Vector{{0.9, 0.1}});
    EXPECT_NEAR(t.tr_G_u[0], 0.32, 1e-15);
    EXPECT_THROW(bures_trace_diagnostics(Vector{{1.0, 0.0}}), DomainError);
}

TEST(TraceDiagnostics, BoundsOnRandomSpectra) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::int64_t n = 2 + trial % 12;
        Vector l = random_simplex(n, rng);
        auto t = bures_trace_diagnostics(l);
        // (a-b)^2/(a+b) <= a+b gives tr G(u_i) <= (n lambda_i + 1)/2 and tr G(U) <= n.
        for (Eigen::Index i = 0; i < n; ++i) EXPECT_LE(t.tr_G_u[i], 0.5 * (n * l[i] + 1.0) + 1e-12);
        EXPECT_LE(t.tr_G_U, n + 1e-12);
        if (n == 2) {
            EXPECT_LE(t.tr_G_u.maxCoeff(), 0.5);
            EXPECT_LE(t.tr_G_U, 1.0);
        }
        EXPECT_GE(t.tr_G_lambda, n * n / 4.0 * (1.0 - 1e-12));
    }
}

TEST(TraceDiagnostics, HalfBoundFailsBeyondTwoLevels) {
    auto t = bures_trace_diagnostics(Vector{{0.98, 0.01, 0.01}});
    EXPECT_NEAR(t.tr_G_u[0], 0.97 * 0.97 / 0.99, 1e-14);
    EXPECT_GT(t.tr_G_u[0], 0.5);
    EXPECT_GT(t.tr_G_U, 1.5);
}

TEST(Entropy, Examples) {
    EXPECT_NEAR(von_neumann_entropy(Vector::Constant(8, 0.125)), std::log(8.0), 1e-14);
    EXPECT_EQ(von_neumann_entropy(Vector{{1.0, 0.0, 0.0}}), 0.0);
    Vector l{{0.7, 0.2, 0.1}};
    EXPECT_GT(von_neumann_entropy(l, 1), von_neumann_entropy(l, 2));
    EXPECT_GT(von_neumann_entropy(l, 2), von_neumann_entropy(l, 4));
}

TEST(Entropy, NonIncreasingInOmega) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Vector l = random_simplex(2 + trial % 20, rng);
        double last = std::numeric_limits<double>::infinity();
        for (double w : {1.0, 1.5, 2.0, 4.0, 8.0}) {
            const double h = von_neumann_entropy(l, w);
            EXPECT_LE(h, last + 1e-12);
            last = h;
        }
    }
}

TEST(SpectralBasis, InvariantsAndArtifactRoundTrip) {
    std::mt19937_64 rng(12);
    auto a = renormalize_adjacency(random_adjacency(40, 0.1, rng));
    auto b = compute_spectral_basis(a, 6);
    EXPECT_LT(orthonormality_error(b.U_bar), 1e-10);
    EXPECT_NEAR(b.lambda_bar.sum(), 1.0, 1e-12);
    for (int i = 0; i < 6; ++i) {
        EXPECT_GT(b.lambda_bar[i], 0.0);
        if (i > 0) {
            EXPECT_LE(b.lambda_bar[i], b.lambda_bar[i - 1]);
        }
        EXPECT_EQ(b.theta_bar[i], std::log(b.lambda_bar[i]));
    }
    EXPECT_NEAR(b.trace_L, laplacian_of(a).trace, 0.0);

    auto path = std::filesystem::temp_directory_path() / ("fbgcn_basis_" + std::to_string(::getpid()) + ".txt");
    {
        std::ofstream f(path);
        write_basis(b, f);
    }
    auto back = read_basis(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.k, b.k);
    EXPECT_EQ(back.U_bar, b.U_bar);
    EXPECT_EQ(back.lambda_bar, b.lambda_bar);
    EXPECT_EQ(back.theta_bar, b.theta_bar);
    EXPECT_EQ(back.trace_L, b.trace_L);

    std::ostringstream s1, s2;
    write_basis(b, s1);
    write_basis(compute_spectral_basis(a, 6), s2);
    EXPECT_EQ(s1.str(), s2.str());
}
