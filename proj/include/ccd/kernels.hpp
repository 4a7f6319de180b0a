#pragma once

#include <cstddef>
#include <cstdint>

namespace ccd::kernels {

// Double-precision inner loops behind the linear algebra layer. The scalar
// table is the reference; the AVX2 table must agree with it within roundoff
// (equivalence-tested). Selection happens once at startup via active_ops().
struct Ops {
    const char* name;

    // sum_i x[i]*y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a*x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // x[i] *= a
    void (*scale)(double a, double* x, std::size_t n);
    // y = A*x + beta*y, A row-major m x n
    void (*gemv)(const double* a, std::size_t m, std::size_t n, const double* x,
                 double beta, double* y);
    // y = A^T*x + beta*y, A row-major m x n (x has length m, y length n)
    void (*gemv_t)(const double* a, std::size_t m, std::size_t n, const double* x,
                   double beta, double* y);
    // out[i] = min(max(x[i], lo[i]), hi[i])
    void (*clamp)(const double* x, const double* lo, const double* hi, double* out,
                  std::size_t n);
    // max_i |x[i]|  (0 for n == 0)
    double (*max_abs)(const double* x, std::size_t n);
    // max_i |x[i] - y[i]|
    double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
    // y[i] = max(x[i], 0)
    void (*relu)(const double* x, double* y, std::size_t n);
    // out[i] = pre[i] > 0 ? g[i] : 0
    void (*relu_mask_mul)(const double* pre, const double* g, double* out, std::size_t n);
    // acc[i] = max(acc[i], x[i])
    void (*elem_max_update)(double* acc, const double* x, std::size_t n);
    // Elementwise Neumaier accumulation: sum[i] += x[i] with running
    // compensation comp[i]. Result of a sequence of calls is recovered as
    // sum[i] + comp[i].
    void (*comp_add)(double* sum, double* comp, const double* x, std::size_t n);
    // y = A*x for CSR (rowptr has m+1 entries)
    void (*csr_spmv)(const std::int32_t* rowptr, const std::int32_t* col,
                     const double* val, std::size_t m, const double* x, double* y);
};

// Always available, plain-loop reference implementation.
const Ops& scalar_ops();

// AVX2+FMA implementation, or nullptr when the build or the CPU lacks it.
const Ops* avx2_ops();

// Runtime-selected table. Environment variable CCDISPATCH_KERNELS=scalar|avx2
// forces a specific table (avx2 silently falls back to scalar if unavailable).
const Ops& active_ops();

}  // namespace ccd::kernels
