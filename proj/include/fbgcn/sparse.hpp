#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace fbgcn {

// Dense blocks are row-major so that CSR row sweeps touch contiguous memory.
using Dense = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Triplet {
    std::int64_t row;
    std::int64_t col;
    double value;
};

// General compressed sparse row matrix. Columns are strictly increasing
// within each row and every stored value is explicit (zeros allowed).
class CsrMatrix {
public:
    CsrMatrix() = default;

    CsrMatrix(std::int64_t rows, std::int64_t cols)
        : rows_(rows), cols_(cols), row_ptr_(static_cast<std::size_t>(rows) + 1, 0) {}

    CsrMatrix(std::int64_t rows, std::int64_t cols, std::vector<std::int64_t> row_ptr,
              std::vector<std::int32_t> col_idx, std::vector<double> values)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
          values_(std::move(values)) {
        check_structure();
    }

    // Duplicate coordinates are summed.
    static CsrMatrix from_triplets(std::int64_t rows, std::int64_t cols, std::vector<Triplet> entries) {
        for (const auto& t : entries) {
            if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
                throw UsageError("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                                 ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
        }
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        CsrMatrix m(rows, cols);
        for (std::size_t i = 0; i < entries.size();) {
            std::size_t j = i;
            double sum = 0.0;
            while (j < entries.size() && entries[j].row == entries[i].row && entries[j].col == entries[i].col)
                sum += entries[j++].value;
            m.col_idx_.push_back(static_cast<std::int32_t>(entries[i].col));
            m.values_.push_back(sum);
            ++m.row_ptr_[static_cast<std::size_t>(entries[i].row) + 1];
            i = j;
        }
        std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
        return m;
    }

    static CsrMatrix identity(std::int64_t n) {
        std::vector<std::int64_t> ptr(static_cast<std::size_t>(n) + 1);
        std::iota(ptr.begin(), ptr.end(), 0);
        std::vector<std::int32_t> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        return CsrMatrix(n, n, std::move(ptr), std::move(idx), std::vector<double>(static_cast<std::size_t>(n), 1.0));
    }

    std::int64_t rows() const noexcept { return rows_; }
    std::int64_t cols() const noexcept { return cols_; }
    std::int64_t nnz() const noexcept { return static_cast<std::int64_t>(values_.size()); }

    const std::vector<std::int64_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<std::int32_t>& col_idx() const noexcept { return col_idx_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    std::span<const std::int32_t> row_cols(std::int64_t i) const {
        return {col_idx_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
    }
    std::span<const double> row_values(std::int64_t i) const {
        return {values_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
    }

    double coeff(std::int64_t i, std::int64_t j) const {
        auto cols = row_cols(i);
        auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::int32_t>(j));
        if (it == cols.end() || *it != j) return 0.0;
        return values_[static_cast<std::size_t>(row_ptr_[i] + (it - cols.begin()))];
    }

    CsrMatrix transpose() const {
        CsrMatrix t(cols_, rows_);
        t.col_idx_.resize(col_idx_.size());
        t.values_.resize(values_.size());
        for (auto c : col_idx_) ++t.row_ptr_[static_cast<std::size_t>(c) + 1];
        std::partial_sum(t.row_ptr_.begin(), t.row_ptr_.end(), t.row_ptr_.begin());
        std::vector<std::int64_t> next(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
        for (std::int64_t i = 0; i < rows_; ++i) {
            for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
                auto dst = next[static_cast<std::size_t>(col_idx_[p])]++;
                t.col_idx_[dst] = static_cast<std::int32_t>(i);
                t.values_[dst] = values_[p];
            }
        }
        return t;
    }

    Dense to_dense() const {
        Dense d = Dense::Zero(rows_, cols_);
        for (std::int64_t i = 0; i < rows_; ++i)
            for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d(i, col_idx_[p]) = values_[p];
        return d;
    }

    Vector row_sums() const {
        Vector s = Vector::Zero(rows_);
        for (std::int64_t i = 0; i < rows_; ++i)
            for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) s[i] += values_[p];
        return s;
    }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

private:
    void check_structure() const {
        if (row_ptr_.size() != static_cast<std::size_t>(rows_) + 1 || row_ptr_.front() != 0 ||
            row_ptr_.back() != static_cast<std::int64_t>(col_idx_.size()) || col_idx_.size() != values_.size())
            throw UsageError("inconsistent CSR arrays");
        for (std::int64_t i = 0; i < rows_; ++i) {
            if (row_ptr_[i + 1] < row_ptr_[i]) throw UsageError("row_ptr not monotone");
            for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
                if (col_idx_[p] < 0 || col_idx_[p] >= cols_) throw UsageError("column index out of range");
                if (p > row_ptr_[i] && col_idx_[p] <= col_idx_[p - 1])
                    throw UsageError("column indices not strictly increasing in row " + std::to_string(i));
            }
        }
    }

    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<std::int64_t> row_ptr_{0};
    std::vector<std::int32_t> col_idx_;
    std::vector<double> values_;
};

// Square CSR matrix whose pattern and values are exactly symmetric. Both
// triangles are stored.
class SparseSym {
public:
    SparseSym() = default;

    explicit SparseSym(CsrMatrix m) : csr_(std::move(m)) {
        if (csr_.rows() != csr_.cols()) throw UsageError("symmetric matrix must be square");
        for (std::int64_t i = 0; i < csr_.rows(); ++i) {
            auto cols = csr_.row_cols(i);
            auto vals = csr_.row_values(i);
            for (std::size_t p = 0; p < cols.size(); ++p) {
                if (csr_.coeff(cols[p], i) != vals[p])
                    throw DataError("matrix not symmetric at (" + std::to_string(i) + "," +
                                    std::to_string(cols[p]) + ")");
            }
        }
    }

    // Builds from one-sided entries: every (i,j,v) is mirrored to (j,i,v);
    // duplicates are summed after mirroring. Diagonal entries are kept once.
    static SparseSym from_upper_triplets(std::int64_t n, const std::vector<Triplet>& entries) {
        std::vector<Triplet> both;
        both.reserve(entries.size() * 2);
        for (const auto& t : entries) {
            both.push_back(t);
            if (t.row != t.col) both.push_back({t.col, t.row, t.value});
        }
        return SparseSym(CsrMatrix::from_triplets(n, n, std::move(both)));
    }

    static SparseSym identity(std::int64_t n) { return SparseSym(CsrMatrix::identity(n)); }

    static SparseSym from_dense(const Dense& d) {
        std::vector<Triplet> t;
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            for (Eigen::Index j = 0; j < d.cols(); ++j)
                if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
        return SparseSym(CsrMatrix::from_triplets(d.rows(), d.cols(), std::move(t)));
    }

    std::int64_t n() const noexcept { return csr_.rows(); }
    std::int64_t nnz() const noexcept { return csr_.nnz(); }
    const CsrMatrix& csr() const noexcept { return csr_; }
    double coeff(std::int64_t i, std::int64_t j) const { return csr_.coeff(i, j); }
    Dense to_dense() const { return csr_.to_dense(); }
    Vector row_sums() const { return csr_.row_sums(); }

    double trace() const {
        double t = 0.0;
        for (std::int64_t i = 0; i < n(); ++i) t += csr_.coeff(i, i);
        return t;
    }

private:
    CsrMatrix csr_;
};

// Sparse times dense. Each output row accumulates in CSR column order, so
// the result does not depend on how rows are scheduled.
inline Dense spmm(const CsrMatrix& m, const Dense& x) {
    if (m.cols() != x.rows())
        throw UsageError("spmm: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " times " +
                         std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    Dense out = Dense::Zero(m.rows(), x.cols());
    const auto& ptr = m.row_ptr();
    const auto& idx = m.col_idx();
    const auto& val = m.values();
    for (std::int64_t i = 0; i < m.rows(); ++i) {
        auto out_row = out.row(i);
        for (auto p = ptr[i]; p < ptr[i + 1]; ++p) out_row.noalias() += val[p] * x.row(idx[p]);
    }
    return out;
}

inline Dense spmm(const SparseSym& m, const Dense& x) { return spmm(m.csr(), x); }

inline Vector spmv(const SparseSym& m, const Vector& x) {
    if (m.n() != x.size()) throw UsageError("spmv: dimension mismatch");
    Vector out(m.n());
    const auto& csr = m.csr();
    for (std::int64_t i = 0; i < m.n(); ++i) {
        double acc = 0.0;
        auto cols = csr.row_cols(i);
        auto vals = csr.row_values(i);
        for (std::size_t p = 0; p < cols.size(); ++p) acc += vals[p] * x[cols[p]];
        out[i] = acc;
    }
    return out;
}

// Fraction of stored entries, nnz / n^2.
inline double sparsity(const SparseSym& m) {
    if (m.n() == 0) return 0.0;
    const auto n = static_cast<double>(m.n());
    return static_cast<double>(m.nnz()) / (n * n);
}

}  // namespace fbgcn
