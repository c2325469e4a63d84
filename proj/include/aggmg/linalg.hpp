#pragma once

/// @file linalg.hpp
/// Sparse (CSR) and small dense linear algebra kernels.
///
/// All summations run in a fixed order (ascending column index within a row,
/// ascending block index across blocks) so results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace aggmg {

using Vector = std::vector<double>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const char* what)
{
    if (!ok) throw DimensionError(std::string("dimension mismatch: ") + what);
}

} // namespace detail

// ---------------------------------------------------------------------------
// vector helpers

inline double dot(std::span<const double> x, std::span<const double> y)
{
    detail::require_dims(x.size() == y.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y)
{
    detail::require_dims(x.size() == y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(double a, std::span<double> x)
{
    for (auto& v : x) v *= a;
}

inline bool all_finite(std::span<const double> x)
{
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// DenseMatrix

/// Column-major dense matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
        : rows_(rows), cols_(cols), data_(std::move(column_major))
    {
        detail::require_dims(data_.size() == rows_ * cols_, "DenseMatrix storage");
    }

    static DenseMatrix identity(std::size_t n)
    {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    /// Row-major initializer, convenient for hand-written fixtures.
    static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows)
    {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.front().size();
        DenseMatrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            detail::require_dims(rows[i].size() == c, "ragged rows");
            for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

    std::span<double> column(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
    std::span<const double> column(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    DenseMatrix transposed() const
    {
        DenseMatrix t(cols_, rows_);
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
        return t;
    }

    Vector multiply(std::span<const double> x) const
    {
        detail::require_dims(x.size() == cols_, "dense mat-vec");
        Vector y(rows_, 0.0);
        for (std::size_t j = 0; j < cols_; ++j) {
            const double xj = x[j];
            const double* col = data_.data() + j * rows_;
            for (std::size_t i = 0; i < rows_; ++i) y[i] += col[i] * xj;
        }
        return y;
    }

    DenseMatrix multiply(const DenseMatrix& b) const
    {
        detail::require_dims(cols_ == b.rows_, "dense product");
        DenseMatrix c(rows_, b.cols_);
        for (std::size_t j = 0; j < b.cols_; ++j)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double bkj = b(k, j);
                if (bkj == 0.0) continue;
                for (std::size_t i = 0; i < rows_; ++i) c(i, j) += (*this)(i, k) * bkj;
            }
        return c;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// BlockPartition

/// Boundaries of consecutive diagonal blocks: block b spans [offsets[b], offsets[b+1]).
class BlockPartition {
public:
    BlockPartition() : offsets_{0} {}
    explicit BlockPartition(std::vector<std::size_t> offsets) : offsets_(std::move(offsets))
    {
        if (offsets_.empty() || offsets_.front() != 0)
            throw Error("block offsets must start at 0");
        for (std::size_t b = 1; b < offsets_.size(); ++b)
            if (offsets_[b] <= offsets_[b - 1]) throw Error("block offsets must be strictly increasing");
    }

    static BlockPartition uniform(std::size_t n_blocks, std::size_t block_size)
    {
        std::vector<std::size_t> o(n_blocks + 1);
        for (std::size_t b = 0; b <= n_blocks; ++b) o[b] = b * block_size;
        return BlockPartition(std::move(o));
    }

    static BlockPartition from_sizes(std::span<const std::size_t> sizes)
    {
        std::vector<std::size_t> o(sizes.size() + 1, 0);
        for (std::size_t b = 0; b < sizes.size(); ++b) o[b + 1] = o[b] + sizes[b];
        return BlockPartition(std::move(o));
    }

    std::size_t n_blocks() const noexcept { return offsets_.size() - 1; }
    std::size_t dimension() const noexcept { return offsets_.back(); }
    std::size_t begin(std::size_t b) const { return offsets_[b]; }
    std::size_t end(std::size_t b) const { return offsets_[b + 1]; }
    std::size_t size(std::size_t b) const { return offsets_[b + 1] - offsets_[b]; }
    std::span<const std::size_t> offsets() const noexcept { return offsets_; }

    friend bool operator==(const BlockPartition&, const BlockPartition&) = default;

private:
    std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------
// SparseMatrix

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix. Immutable once constructed.
class SparseMatrix {
public:
    SparseMatrix() : row_offsets_{0} {}

    SparseMatrix(std::size_t nrows, std::size_t ncols, std::vector<std::size_t> row_offsets,
                 std::vector<std::size_t> col_indices, std::vector<double> values)
        : nrows_(nrows), ncols_(ncols), row_offsets_(std::move(row_offsets)),
          col_indices_(std::move(col_indices)), values_(std::move(values))
    {
        validate();
    }

    /// Duplicates are summed; explicit zeros are kept.
    static SparseMatrix from_triplets(std::size_t nrows, std::size_t ncols, std::vector<Triplet> t)
    {
        for (const auto& e : t)
            if (e.row >= nrows || e.col >= ncols) throw DimensionError("triplet index out of range");
        std::stable_sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<std::size_t> offsets(nrows + 1, 0);
        std::vector<std::size_t> cols;
        std::vector<double> vals;
        cols.reserve(t.size());
        vals.reserve(t.size());
        for (std::size_t i = 0; i < t.size();) {
            std::size_t j = i;
            double s = 0.0;
            while (j < t.size() && t[j].row == t[i].row && t[j].col == t[i].col) s += t[j++].value;
            cols.push_back(t[i].col);
            vals.push_back(s);
            ++offsets[t[i].row + 1];
            i = j;
        }
        std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
        return SparseMatrix(nrows, ncols, std::move(offsets), std::move(cols), std::move(vals));
    }

    static SparseMatrix identity(std::size_t n)
    {
        std::vector<std::size_t> o(n + 1), c(n);
        std::iota(o.begin(), o.end(), std::size_t{0});
        std::iota(c.begin(), c.end(), std::size_t{0});
        return SparseMatrix(n, n, std::move(o), std::move(c), Vector(n, 1.0));
    }

    static SparseMatrix from_dense(const DenseMatrix& d)
    {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < d.rows(); ++i)
            for (std::size_t j = 0; j < d.cols(); ++j)
                if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
        return from_triplets(d.rows(), d.cols(), std::move(t));
    }

    std::size_t rows() const noexcept { return nrows_; }
    std::size_t cols() const noexcept { return ncols_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
    std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
    std::span<const double> values() const noexcept { return values_; }

    std::span<const std::size_t> row_cols(std::size_t i) const
    {
        return {col_indices_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }
    std::span<const double> row_values(std::size_t i) const
    {
        return {values_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
    }

    /// Stored value at (i, j), zero when absent.
    double at(std::size_t i, std::size_t j) const
    {
        auto c = row_cols(i);
        auto it = std::lower_bound(c.begin(), c.end(), j);
        if (it == c.end() || *it != j) return 0.0;
        return values_[row_offsets_[i] + static_cast<std::size_t>(it - c.begin())];
    }

    DenseMatrix to_dense() const
    {
        DenseMatrix d(nrows_, ncols_);
        for (std::size_t i = 0; i < nrows_; ++i)
            for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) d(i, col_indices_[k]) = values_[k];
        return d;
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
    void validate() const
    {
        if (row_offsets_.size() != nrows_ + 1) throw Error("row_offsets must have nrows+1 entries");
        if (row_offsets_.front() != 0 || row_offsets_.back() != values_.size())
            throw Error("row_offsets must start at 0 and end at nnz");
        if (col_indices_.size() != values_.size()) throw Error("col_indices/values length mismatch");
        for (std::size_t i = 0; i < nrows_; ++i) {
            if (row_offsets_[i + 1] < row_offsets_[i]) throw Error("row_offsets must be nondecreasing");
            for (std::size_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
                if (col_indices_[k] >= ncols_) throw Error("column index out of range");
                if (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1])
                    throw Error("column indices must be strictly increasing within a row");
            }
        }
        if (!all_finite(values_)) throw Error("sparse matrix holds a non-finite value");
    }

    std::size_t nrows_ = 0;
    std::size_t ncols_ = 0;
    std::vector<std::size_t> row_offsets_;
    std::vector<std::size_t> col_indices_;
    std::vector<double> values_;
};

/// y = A x, summed in ascending column order within each row.
inline void spmv(const SparseMatrix& a, std::span<const double> x, std::span<double> y)
{
    detail::require_dims(x.size() == a.cols() && y.size() == a.rows(), "spmv");
    const auto ro = a.row_offsets();
    const auto ci = a.col_indices();
    const auto va = a.values();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = ro[i]; k < ro[i + 1]; ++k) s += va[k] * x[ci[k]];
        y[i] = s;
    }
}

inline Vector spmv(const SparseMatrix& a, std::span<const double> x)
{
    Vector y(a.rows());
    spmv(a, x, y);
    return y;
}

/// Y = A X for a dense block of columns.
inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& x)
{
    detail::require_dims(x.rows() == a.cols(), "spmm");
    DenseMatrix y(a.rows(), x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) spmv(a, x.column(j), y.column(j));
    return y;
}

inline SparseMatrix transpose(const SparseMatrix& a)
{
    std::vector<std::size_t> offsets(a.cols() + 1, 0);
    for (auto c : a.col_indices()) ++offsets[c + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::size_t> cols(a.nnz());
    Vector vals(a.nnz());
    std::vector<std::size_t> next(offsets.begin(), offsets.end() - 1);
    // Rows visited in ascending order keep the transposed columns sorted.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto rc = a.row_cols(i);
        auto rv = a.row_values(i);
        for (std::size_t k = 0; k < rc.size(); ++k) {
            const std::size_t dst = next[rc[k]]++;
            cols[dst] = i;
            vals[dst] = rv[k];
        }
    }
    return SparseMatrix(a.cols(), a.rows(), std::move(offsets), std::move(cols), std::move(vals));
}

/// Structural product C = A B (Gustavson). Entries that cancel to exactly zero are kept.
inline SparseMatrix sparse_product(const SparseMatrix& a, const SparseMatrix& b)
{
    detail::require_dims(a.cols() == b.rows(), "sparse_product");
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> marker(b.cols(), unset);
    Vector acc(b.cols(), 0.0);
    std::vector<std::size_t> offsets(a.rows() + 1, 0);
    std::vector<std::size_t> cols;
    Vector vals;
    std::vector<std::size_t> row_cols;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        row_cols.clear();
        auto ac = a.row_cols(i);
        auto av = a.row_values(i);
        for (std::size_t ka = 0; ka < ac.size(); ++ka) {
            const std::size_t k = ac[ka];
            const double aik = av[ka];
            auto bc = b.row_cols(k);
            auto bv = b.row_values(k);
            for (std::size_t kb = 0; kb < bc.size(); ++kb) {
                const std::size_t j = bc[kb];
                if (marker[j] != i) {
                    marker[j] = i;
                    acc[j] = 0.0;
                    row_cols.push_back(j);
                }
                acc[j] += aik * bv[kb];
            }
        }
        std::sort(row_cols.begin(), row_cols.end());
        for (auto j : row_cols) {
            cols.push_back(j);
            vals.push_back(acc[j]);
        }
        offsets[i + 1] = cols.size();
    }
    return SparseMatrix(a.rows(), b.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

/// C = alpha A + beta B on the union pattern.
inline SparseMatrix sparse_add(double alpha, const SparseMatrix& a, double beta, const SparseMatrix& b)
{
    detail::require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "sparse_add");
    std::vector<std::size_t> offsets(a.rows() + 1, 0);
    std::vector<std::size_t> cols;
    Vector vals;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ac = a.row_cols(i);
        auto av = a.row_values(i);
        auto bc = b.row_cols(i);
        auto bv = b.row_values(i);
        std::size_t p = 0, q = 0;
        while (p < ac.size() || q < bc.size()) {
            if (q == bc.size() || (p < ac.size() && ac[p] < bc[q])) {
                cols.push_back(ac[p]);
                vals.push_back(alpha * av[p++]);
            } else if (p == ac.size() || bc[q] < ac[p]) {
                cols.push_back(bc[q]);
                vals.push_back(beta * bv[q++]);
            } else {
                cols.push_back(ac[p]);
                vals.push_back(alpha * av[p++] + beta * bv[q++]);
            }
        }
        offsets[i + 1] = cols.size();
    }
    return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

// ---------------------------------------------------------------------------
// Dense LU with partial pivoting

class DenseLU {
public:
    DenseLU() = default;

    explicit DenseLU(DenseMatrix m) : lu_(std::move(m)), pivots_(lu_.rows())
    {
        detail::require_dims(lu_.rows() == lu_.cols(), "LU of non-square matrix");
        const std::size_t n = lu_.rows();
        const double scale = lu_.max_abs();
        const double tiny = scale * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * 1e-3;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            double best = std::abs(lu_(k, k));
            for (std::size_t i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > best) {
                    best = std::abs(lu_(i, k));
                    p = i;
                }
            if (best == 0.0 || best <= tiny)
                throw SingularMatrixError("singular matrix: zero pivot in column " + std::to_string(k));
            pivots_[k] = p;
            if (p != k)
                for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
            const double inv = 1.0 / lu_(k, k);
            for (std::size_t i = k + 1; i < n; ++i) lu_(i, k) *= inv;
            for (std::size_t j = k + 1; j < n; ++j) {
                const double ukj = lu_(k, j);
                if (ukj == 0.0) continue;
                for (std::size_t i = k + 1; i < n; ++i) lu_(i, j) -= lu_(i, k) * ukj;
            }
        }
    }

    std::size_t size() const noexcept { return lu_.rows(); }

    /// In-place solve.
    void solve_in_place(std::span<double> x) const
    {
        const std::size_t n = lu_.rows();
        detail::require_dims(x.size() == n, "LU solve");
        for (std::size_t k = 0; k < n; ++k)
            if (pivots_[k] != k) std::swap(x[k], x[pivots_[k]]);
        for (std::size_t j = 0; j < n; ++j) {
            const double xj = x[j];
            if (xj == 0.0) continue;
            for (std::size_t i = j + 1; i < n; ++i) x[i] -= lu_(i, j) * xj;
        }
        for (std::size_t jj = n; jj-- > 0;) {
            x[jj] /= lu_(jj, jj);
            const double xj = x[jj];
            if (xj == 0.0) continue;
            for (std::size_t i = 0; i < jj; ++i) x[i] -= lu_(i, jj) * xj;
        }
    }

    Vector solve(std::span<const double> b) const
    {
        Vector x(b.begin(), b.end());
        solve_in_place(x);
        return x;
    }

private:
    DenseMatrix lu_;
    std::vector<std::size_t> pivots_;
};

inline Vector dense_lu_solve(const DenseMatrix& m, std::span<const double> b)
{
    detail::require_dims(m.rows() == b.size(), "dense_lu_solve");
    return DenseLU(m).solve(b);
}

// ---------------------------------------------------------------------------
// Block diagonal extraction

inline DenseMatrix extract_block(const SparseMatrix& a, std::size_t r0, std::size_t r1, std::size_t c0,
                                 std::size_t c1)
{
    DenseMatrix d(r1 - r0, c1 - c0);
    for (std::size_t i = r0; i < r1; ++i) {
        auto rc = a.row_cols(i);
        auto rv = a.row_values(i);
        auto lo = std::lower_bound(rc.begin(), rc.end(), c0);
        for (auto it = lo; it != rc.end() && *it < c1; ++it)
            d(i - r0, *it - c0) = rv[static_cast<std::size_t>(it - rc.begin())];
    }
    return d;
}

/// LU-factored diagonal blocks D of A; applies D^{-1}.
class BlockDiagonalInverse {
public:
    BlockDiagonalInverse() = default;

    BlockDiagonalInverse(const SparseMatrix& a, BlockPartition blocks) : blocks_(std::move(blocks))
    {
        detail::require_dims(a.rows() == a.cols(), "block_diagonal of non-square matrix");
        detail::require_dims(blocks_.dimension() == a.rows(), "block partition vs matrix");
        factors_.reserve(blocks_.n_blocks());
        for (std::size_t b = 0; b < blocks_.n_blocks(); ++b) {
            try {
                factors_.emplace_back(
                    extract_block(a, blocks_.begin(b), blocks_.end(b), blocks_.begin(b), blocks_.end(b)));
            } catch (const SingularMatrixError&) {
                throw SingularMatrixError("singular diagonal block " + std::to_string(b));
            }
        }
    }

    const BlockPartition& blocks() const noexcept { return blocks_; }
    const DenseLU& block(std::size_t b) const { return factors_[b]; }

    void apply_in_place(std::span<double> v) const
    {
        detail::require_dims(v.size() == blocks_.dimension(), "block inverse apply");
        for (std::size_t b = 0; b < factors_.size(); ++b)
            factors_[b].solve_in_place(v.subspan(blocks_.begin(b), blocks_.size(b)));
    }

    Vector apply(std::span<const double> v) const
    {
        Vector out(v.begin(), v.end());
        apply_in_place(out);
        return out;
    }

private:
    BlockPartition blocks_;
    std::vector<DenseLU> factors_;
};

inline BlockDiagonalInverse block_diagonal(const SparseMatrix& a, const BlockPartition& blocks)
{
    return BlockDiagonalInverse(a, blocks);
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblem (cyclic Jacobi), for small dense matrices

struct SymmetricEigen {
    Vector values;       ///< ascending
    DenseMatrix vectors; ///< column j pairs with values[j]
};

inline SymmetricEigen symmetric_eigen(DenseMatrix a)
{
    detail::require_dims(a.rows() == a.cols(), "symmetric_eigen");
    const std::size_t n = a.rows();
    DenseMatrix v = DenseMatrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                total += a(i, j) * a(i, j);
                if (i != j) off += a(i, j) * a(i, j);
            }
        if (off <= 1e-30 * total || off == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymmetricEigen out{Vector(n), DenseMatrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        std::copy(v.column(order[j]).begin(), v.column(order[j]).end(), out.vectors.column(j).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVD (one-sided Jacobi)

struct Svd {
    DenseMatrix u;      ///< m x k, orthonormal columns
    Vector sigma;       ///< k values, nonincreasing
    DenseMatrix v;      ///< n x k, orthonormal columns
};

namespace detail {

/// Hestenes one-sided Jacobi for a tall matrix (rows >= cols).
inline Svd jacobi_svd_tall(DenseMatrix a)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    DenseMatrix v = DenseMatrix::identity(n);
    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 80;

    bool converged = n < 2;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto ap = a.column(p);
                auto aq = a.column(q);
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += ap[i] * ap[i];
                    beta += aq[i] * aq[i];
                    gamma += ap[i] * aq[i];
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = ap[i];
                    const double y = aq[i];
                    ap[i] = c * x - s * y;
                    aq[i] = s * x + c * y;
                }
                auto vp = v.column(p);
                auto vq = v.column(q);
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
    }
    if (!converged) throw ConvergenceError("Jacobi SVD did not converge");

    Vector sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(a.column(j));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out{DenseMatrix(m, n), Vector(n), DenseMatrix(n, n)};
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.sigma[jj] = sigma[j];
        auto src = a.column(j);
        auto dst = out.u.column(jj);
        if (sigma[j] > 0.0)
            for (std::size_t i = 0; i < m; ++i) dst[i] = src[i] / sigma[j];
        std::copy(v.column(j).begin(), v.column(j).end(), out.v.column(jj).begin());
    }
    // Exactly-zero singular values leave empty U columns; complete them with
    // Gram-Schmidt on unit vectors.
    std::size_t next_unit = 0;
    for (std::size_t jj = 0; jj < n; ++jj) {
        if (out.sigma[jj] > 0.0) continue;
        auto dst = out.u.column(jj);
        for (; next_unit < m; ++next_unit) {
            std::fill(dst.begin(), dst.end(), 0.0);
            dst[next_unit] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == jj || (out.sigma[k] == 0.0 && k > jj)) continue;
                    auto uk = out.u.column(k);
                    axpy(-dot(uk, dst), uk, dst);
                }
            const double nrm = norm2(dst);
            if (nrm > 1e-8) {
                scale(1.0 / nrm, dst);
                ++next_unit;
                break;
            }
        }
    }
    return out;
}

} // namespace detail

/// Thin SVD M = U diag(sigma) V^T. Each left singular vector is signed so its
/// largest-magnitude entry is positive.
inline Svd svd(const DenseMatrix& m)
{
    if (!all_finite(m.values())) throw Error("svd: non-finite input");
    Svd out;
    if (m.rows() >= m.cols()) {
        out = detail::jacobi_svd_tall(m);
    } else {
        Svd t = detail::jacobi_svd_tall(m.transposed());
        out = Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
    }
    for (std::size_t j = 0; j < out.sigma.size(); ++j) {
        auto uj = out.u.column(j);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < uj.size(); ++i)
            if (std::abs(uj[i]) > std::abs(uj[arg])) arg = i;
        if (!uj.empty() && uj[arg] < 0.0) {
            scale(-1.0, uj);
            scale(-1.0, out.v.column(j));
        }
    }
    return out;
}

} // namespace aggmg
