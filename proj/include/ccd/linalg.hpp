#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ccd/kernels.hpp"

namespace ccd {

using Vec = std::vector<double>;

// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& storage() const { return data_; }
    std::vector<double>& storage() { return data_; }

    // y = this * x
    Vec multiply(const Vec& x) const;
    // y = this^T * x
    Vec multiply_transposed(const Vec& x) const;
    Matrix transposed() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Compressed sparse row matrix; column indices are 32-bit (row/col counts in
// this project stay far below 2^31).
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> rowptr;  // rows+1 entries
    std::vector<std::int32_t> col;
    std::vector<double> val;

    static CsrMatrix from_dense(const Matrix& m, double drop_tol = 0.0);
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<std::int32_t> row_idx,
                                   std::vector<std::int32_t> col_idx,
                                   std::vector<double> values);

    std::size_t nnz() const { return val.size(); }
    Vec multiply(const Vec& x) const;
    CsrMatrix transposed() const;
    Matrix to_dense() const;
    void scale_rows(const Vec& r);  // row i *= r[i]
    void scale_cols(const Vec& c);  // col j *= c[j]
};

// Cholesky factorization of a symmetric positive definite matrix.
class Cholesky {
public:
    bool factor(Matrix a);  // false if not SPD (within roundoff)
    Vec solve(const Vec& b) const;
    std::size_t dim() const { return l_.rows(); }

private:
    Matrix l_;
};

// LU with partial pivoting (used for symmetric indefinite polish systems).
class Lu {
public:
    bool factor(Matrix a);  // false if singular
    Vec solve(const Vec& b) const;

private:
    Matrix lu_;
    std::vector<std::size_t> piv_;
};

// Vector helpers (thin wrappers over the kernel table).
double dot(const Vec& x, const Vec& y);
void axpy(double a, const Vec& x, Vec& y);
double norm_inf(const Vec& x);
double norm2(const Vec& x);
Vec add(const Vec& x, const Vec& y);
Vec sub(const Vec& x, const Vec& y);
Vec scaled(const Vec& x, double a);

}  // namespace ccd
