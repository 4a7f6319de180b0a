#include "ccd/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ccd {

namespace {
const kernels::Ops& K() { return kernels::active_ops(); }
}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vec Matrix::multiply(const Vec& x) const {
    assert(x.size() == cols_);
    Vec y(rows_, 0.0);
    if (rows_ > 0 && cols_ > 0) K().gemv(data_.data(), rows_, cols_, x.data(), 0.0, y.data());
    return y;
}

Vec Matrix::multiply_transposed(const Vec& x) const {
    assert(x.size() == rows_);
    Vec y(cols_, 0.0);
    if (rows_ > 0 && cols_ > 0)
        K().gemv_t(data_.data(), rows_, cols_, x.data(), 0.0, y.data());
    return y;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

CsrMatrix CsrMatrix::from_dense(const Matrix& m, double drop_tol) {
    CsrMatrix out;
    out.rows = m.rows();
    out.cols = m.cols();
    out.rowptr.resize(out.rows + 1, 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (std::fabs(m(i, j)) > drop_tol) {
                out.col.push_back(static_cast<std::int32_t>(j));
                out.val.push_back(m(i, j));
            }
        }
        out.rowptr[i + 1] = static_cast<std::int32_t>(out.col.size());
    }
    return out;
}

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::int32_t> row_idx,
                                   std::vector<std::int32_t> col_idx,
                                   std::vector<double> values) {
    assert(row_idx.size() == col_idx.size() && col_idx.size() == values.size());
    CsrMatrix out;
    out.rows = rows;
    out.cols = cols;
    out.rowptr.assign(rows + 1, 0);
    for (std::int32_t r : row_idx) out.rowptr[static_cast<std::size_t>(r) + 1]++;
    for (std::size_t i = 0; i < rows; ++i) out.rowptr[i + 1] += out.rowptr[i];
    out.col.resize(values.size());
    out.val.resize(values.size());
    std::vector<std::int32_t> cursor(out.rowptr.begin(), out.rowptr.end() - 1);
    for (std::size_t k = 0; k < values.size(); ++k) {
        const std::int32_t dst = cursor[row_idx[k]]++;
        out.col[dst] = col_idx[k];
        out.val[dst] = values[k];
    }
    return out;
}

Vec CsrMatrix::multiply(const Vec& x) const {
    assert(x.size() == cols);
    Vec y(rows, 0.0);
    if (rows > 0 && nnz() > 0)
        K().csr_spmv(rowptr.data(), col.data(), val.data(), rows, x.data(), y.data());
    return y;
}

CsrMatrix CsrMatrix::transposed() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.rowptr.assign(cols + 1, 0);
    for (std::int32_t c : col) t.rowptr[static_cast<std::size_t>(c) + 1]++;
    for (std::size_t i = 0; i < cols; ++i) t.rowptr[i + 1] += t.rowptr[i];
    t.col.resize(val.size());
    t.val.resize(val.size());
    std::vector<std::int32_t> cursor(t.rowptr.begin(), t.rowptr.end() - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::int32_t k = rowptr[r]; k < rowptr[r + 1]; ++k) {
            const std::int32_t dst = cursor[col[k]]++;
            t.col[dst] = static_cast<std::int32_t>(r);
            t.val[dst] = val[k];
        }
    }
    return t;
}

Matrix CsrMatrix::to_dense() const {
    Matrix d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::int32_t k = rowptr[r]; k < rowptr[r + 1]; ++k) d(r, col[k]) += val[k];
    return d;
}

void CsrMatrix::scale_rows(const Vec& r) {
    assert(r.size() == rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::int32_t k = rowptr[i]; k < rowptr[i + 1]; ++k) val[k] *= r[i];
}

void CsrMatrix::scale_cols(const Vec& c) {
    assert(c.size() == cols);
    for (std::size_t k = 0; k < val.size(); ++k) val[k] *= c[col[k]];
}

bool Cholesky::factor(Matrix a) {
    assert(a.rows() == a.cols());
    const std::size_t n = a.rows();
    l_ = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double s = K().dot(l_.row(i), l_.row(j), j);
            if (i == j) {
                const double d = a(i, i) - s;
                if (!(d > 0.0) || !std::isfinite(d)) return false;
                l_(i, i) = std::sqrt(d);
            } else {
                l_(i, j) = (a(i, j) - s) / l_(j, j);
            }
        }
    }
    return true;
}

Vec Cholesky::solve(const Vec& b) const {
    const std::size_t n = l_.rows();
    assert(b.size() == n);
    Vec y(b);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = (y[i] - K().dot(l_.row(i), y.data(), i)) / l_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= l_(j, ii) * y[j];
        y[ii] = s / l_(ii, ii);
    }
    return y;
}

bool Lu::factor(Matrix a) {
    assert(a.rows() == a.cols());
    const std::size_t n = a.rows();
    lu_ = std::move(a);
    piv_.resize(n);
    std::iota(piv_.begin(), piv_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::fabs(lu_(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(lu_(i, k));
            if (v > best) {
                best = v;
                p = i;
            }
        }
        if (best == 0.0 || !std::isfinite(best)) return false;
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
            std::swap(piv_[k], piv_[p]);
        }
        const double inv = 1.0 / lu_(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu_(i, k) * inv;
            lu_(i, k) = f;
            if (f != 0.0) K().axpy(-f, lu_.row(k) + k + 1, lu_.row(i) + k + 1, n - k - 1);
        }
    }
    return true;
}

Vec Lu::solve(const Vec& b) const {
    const std::size_t n = lu_.rows();
    assert(b.size() == n);
    Vec y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = b[piv_[i]];
    for (std::size_t i = 1; i < n; ++i) y[i] -= K().dot(lu_.row(i), y.data(), i);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= lu_(ii, j) * y[j];
        y[ii] = s / lu_(ii, ii);
    }
    return y;
}

double dot(const Vec& x, const Vec& y) {
    assert(x.size() == y.size());
    return K().dot(x.data(), y.data(), x.size());
}

void axpy(double a, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    K().axpy(a, x.data(), y.data(), x.size());
}

double norm_inf(const Vec& x) { return K().max_abs(x.data(), x.size()); }

double norm2(const Vec& x) { return std::sqrt(std::max(0.0, dot(x, x))); }

Vec add(const Vec& x, const Vec& y) {
    Vec out(x);
    axpy(1.0, y, out);
    return out;
}

Vec sub(const Vec& x, const Vec& y) {
    Vec out(x);
    axpy(-1.0, y, out);
    return out;
}

Vec scaled(const Vec& x, double a) {
    Vec out(x);
    K().scale(a, out.data(), out.size());
    return out;
}

}  // namespace ccd
