#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "sparse.hpp"

namespace fbgcn {

struct ProximityOptions {
    int order = 5;             // T
    double threshold = 1e-4;   // nu
};

namespace detail {

// Sparse accumulator for one dense-length row.
class RowAccumulator {
public:
    explicit RowAccumulator(std::int64_t n) : value_(static_cast<std::size_t>(n), 0.0), used_(static_cast<std::size_t>(n), 0) {}

    void add(std::int32_t j, double v) {
        if (!used_[j]) {
            used_[j] = 1;
            touched_.push_back(j);
        }
        value_[j] += v;
    }

    const std::vector<std::int32_t>& touched() const noexcept { return touched_; }
    double operator[](std::int32_t j) const { return value_[j]; }

    void clear() {
        for (auto j : touched_) {
            value_[j] = 0.0;
            used_[j] = 0;
        }
        touched_.clear();
    }

private:
    std::vector<double> value_;
    std::vector<char> used_;
    std::vector<std::int32_t> touched_;
};

// D^{-1} A with zero-degree rows left empty.
inline CsrMatrix row_normalize(const SparseSym& a) {
    CsrMatrix p = a.csr();
    auto& vals = p.values();
    for (std::int64_t i = 0; i < p.rows(); ++i) {
        double deg = 0.0;
        for (auto k = p.row_ptr()[i]; k < p.row_ptr()[i + 1]; ++k) deg += vals[k];
        if (deg == 0.0) continue;
        for (auto k = p.row_ptr()[i]; k < p.row_ptr()[i + 1]; ++k) vals[k] /= deg;
    }
    return p;
}

}  // namespace detail

// Random-walk proximity preprocessing (the GCN^T adjacency). Returns the
// final symmetric normalized matrix; it must not be renormalized again.
//
// Rows of S = sum_{t=1..T} P^t are produced one at a time and thresholded
// immediately, so peak memory is bounded by the thresholded output.
inline SparseSym highorder_preprocess(const SparseSym& adjacency, const ProximityOptions& opt = {}) {
    if (opt.order < 1) throw UsageError("order T must be >= 1");
    if (!(opt.threshold > 0.0)) throw UsageError("threshold nu must be > 0");
    const auto n = adjacency.n();
    const CsrMatrix p = detail::row_normalize(adjacency);
    const auto& ptr = p.row_ptr();
    const auto& idx = p.col_idx();
    const auto& val = p.values();
    const double inv_t = 1.0 / static_cast<double>(opt.order);

    // Thresholded, diagonal-free (S / T), one sorted row at a time.
    std::vector<std::int64_t> kept_ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::int32_t> kept_idx;
    std::vector<double> kept_val;

    detail::RowAccumulator walk(n), next(n), sum(n);
    std::vector<std::int32_t> cols;
    for (std::int64_t i = 0; i < n; ++i) {
        for (auto k = ptr[i]; k < ptr[i + 1]; ++k) {
            walk.add(idx[k], val[k]);
            sum.add(idx[k], val[k]);
        }
        for (int t = 2; t <= opt.order; ++t) {
            for (auto m : walk.touched()) {
                const double w = walk[m];
                for (auto k = ptr[m]; k < ptr[m + 1]; ++k) next.add(idx[k], w * val[k]);
            }
            walk.clear();
            for (auto j : next.touched()) {
                walk.add(j, next[j]);
                sum.add(j, next[j]);
            }
            next.clear();
        }
        walk.clear();

        cols.assign(sum.touched().begin(), sum.touched().end());
        std::sort(cols.begin(), cols.end());
        for (auto j : cols) {
            if (j == i) continue;
            const double v = sum[j] * inv_t;
            if (v > opt.threshold) {
                kept_idx.push_back(j);
                kept_val.push_back(v);
            }
        }
        sum.clear();
        kept_ptr[i + 1] = static_cast<std::int64_t>(kept_idx.size());
    }
    const CsrMatrix kept(n, n, std::move(kept_ptr), std::move(kept_idx), std::move(kept_val));
    const CsrMatrix kept_t = kept.transpose();

    // C = K + K^T + 2I, merged row by row.
    std::vector<std::int64_t> c_ptr(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::int32_t> c_idx;
    std::vector<double> c_val;
    c_idx.reserve(static_cast<std::size_t>(2 * kept.nnz() + n));
    c_val.reserve(static_cast<std::size_t>(2 * kept.nnz() + n));
    for (std::int64_t i = 0; i < n; ++i) {
        auto ac = kept.row_cols(i), bc = kept_t.row_cols(i);
        auto av = kept.row_values(i), bv = kept_t.row_values(i);
        std::size_t a = 0, b = 0;
        bool diag_done = false;
        while (a < ac.size() || b < bc.size() || !diag_done) {
            const std::int64_t ca = a < ac.size() ? ac[a] : n;
            const std::int64_t cb = b < bc.size() ? bc[b] : n;
            const std::int64_t c = std::min(ca, cb);
            if (!diag_done && i <= c) {
                c_idx.push_back(static_cast<std::int32_t>(i));
                c_val.push_back(2.0);
                diag_done = true;
                continue;
            }
            double v = 0.0;
            if (ca == c && cb == c) {
                v = av[a++] + bv[b++];
            } else if (ca == c) {
                v = av[a++] + 0.0;
            } else {
                v = 0.0 + bv[b++];
            }
            c_idx.push_back(static_cast<std::int32_t>(c));
            c_val.push_back(v);
        }
        c_ptr[i + 1] = static_cast<std::int64_t>(c_idx.size());
    }

    CsrMatrix c(n, n, std::move(c_ptr), std::move(c_idx), std::move(c_val));
    const Vector deg = c.row_sums();
    std::vector<double> scale(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) scale[i] = 1.0 / std::sqrt(deg[i]);
    auto& cv = c.values();
    for (std::int64_t i = 0; i < n; ++i)
        for (auto k = c.row_ptr()[i]; k < c.row_ptr()[i + 1]; ++k) cv[k] *= scale[i] * scale[c.col_idx()[k]];
    return SparseSym(std::move(c));
}

}  // namespace fbgcn
