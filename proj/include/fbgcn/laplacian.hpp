#pragma once

#include <cmath>
#include <vector>

#include "sparse.hpp"

namespace fbgcn {

// Renormalization trick: (D+I)^{-1/2} (A+I) (D+I)^{-1/2}. The scale factor
// for (i,j) is formed as s_i * s_j in both triangles, so the output is
// symmetric bit-for-bit.
inline SparseSym renormalize_adjacency(const SparseSym& adjacency) {
    const auto n = adjacency.n();
    const auto& a = adjacency.csr();
    Vector degree = a.row_sums();
    std::vector<double> scale(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(degree[i] + 1.0);

    std::vector<std::int64_t> ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::int32_t> idx;
    std::vector<double> val;
    idx.reserve(static_cast<std::size_t>(a.nnz() + n));
    val.reserve(static_cast<std::size_t>(a.nnz() + n));
    for (std::int64_t i = 0; i < n; ++i) {
        auto cols = a.row_cols(i);
        auto vals = a.row_values(i);
        bool diag_done = false;
        for (std::size_t p = 0; p <= cols.size(); ++p) {
            if (!diag_done && (p == cols.size() || cols[p] > i)) {
                idx.push_back(static_cast<std::int32_t>(i));
                val.push_back(scale[i] * scale[i]);
                diag_done = true;
            }
            if (p == cols.size()) break;
            if (cols[p] == i) throw DataError("adjacency has a self-loop at node " + std::to_string(i));
            idx.push_back(cols[p]);
            val.push_back(vals[p] * (scale[i] * scale[cols[p]]));
        }
        ptr[i + 1] = static_cast<std::int64_t>(idx.size());
    }
    return SparseSym(CsrMatrix(n, n, std::move(ptr), std::move(idx), std::move(val)));
}

struct Laplacian {
    SparseSym matrix;
    double trace = 0.0;
};

// L = I - Ã together with tr(L). A non-positive trace means no density
// matrix L / tr(L) exists.
inline Laplacian laplacian_of(const SparseSym& normalized) {
    const auto n = normalized.n();
    const auto& a = normalized.csr();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nnz() + n));
    for (std::int64_t i = 0; i < n; ++i) {
        auto cols = a.row_cols(i);
        auto vals = a.row_values(i);
        bool has_diag = false;
        for (std::size_t p = 0; p < cols.size(); ++p) {
            if (cols[p] == i) {
                t.push_back({i, i, 1.0 - vals[p]});
                has_diag = true;
            } else {
                t.push_back({i, cols[p], -vals[p]});
            }
        }
        if (!has_diag) t.push_back({i, i, 1.0});
    }
    Laplacian out{SparseSym(CsrMatrix::from_triplets(n, n, std::move(t))), 0.0};
    out.trace = out.matrix.trace();
    if (!(out.trace > 0.0))
        throw NumericalError("Laplacian trace is " + std::to_string(out.trace) + "; density matrix undefined");
    return out;
}

// rho = L / tr(L).
inline SparseSym density_matrix(const Laplacian& lap) {
    CsrMatrix m = lap.matrix.csr();
    for (auto& v : m.values()) v /= lap.trace;
    return SparseSym(std::move(m));
}

}  // namespace fbgcn
