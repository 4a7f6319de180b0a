#include "ccd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace ccd::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void gemv_scalar(const double* a, std::size_t m, std::size_t n, const double* x,
                 double beta, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = beta == 0.0 ? acc : beta * y[i] + acc;
    }
}

void gemv_t_scalar(const double* a, std::size_t m, std::size_t n, const double* x,
                   double beta, double* y) {
    if (beta == 0.0) {
        std::memset(y, 0, n * sizeof(double));
    } else if (beta != 1.0) {
        scale_scalar(beta, y, n);
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = a + i * n;
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * row[j];
    }
}

void clamp_scalar(const double* x, const double* lo, const double* hi, double* out,
                  std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
}

double max_abs_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = std::max(acc, std::fabs(x[i]));
    return acc;
}

double max_abs_diff_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = std::max(acc, std::fabs(x[i] - y[i]));
    return acc;
}

void relu_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_mask_mul_scalar(const double* pre, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void elem_max_update_scalar(double* acc, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] = std::max(acc[i], x[i]);
}

void comp_add_scalar(double* sum, double* comp, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double s = sum[i];
        const double v = x[i];
        const double t = s + v;
        // Neumaier: the smaller-magnitude operand loses the bits.
        if (std::fabs(s) >= std::fabs(v)) {
            comp[i] += (s - t) + v;
        } else {
            comp[i] += (v - t) + s;
        }
        sum[i] = t;
    }
}

void csr_spmv_scalar(const std::int32_t* rowptr, const std::int32_t* col,
                     const double* val, std::size_t m, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::int32_t k = rowptr[i]; k < rowptr[i + 1]; ++k) acc += val[k] * x[col[k]];
        y[i] = acc;
    }
}

constexpr Ops kScalarOps = {
    "scalar",
    dot_scalar,
    axpy_scalar,
    scale_scalar,
    gemv_scalar,
    gemv_t_scalar,
    clamp_scalar,
    max_abs_scalar,
    max_abs_diff_scalar,
    relu_scalar,
    relu_mask_mul_scalar,
    elem_max_update_scalar,
    comp_add_scalar,
    csr_spmv_scalar,
};

const Ops* select_ops() {
    const char* forced = std::getenv("CCDISPATCH_KERNELS");
    if (forced != nullptr && std::strcmp(forced, "scalar") == 0) return &kScalarOps;
    const Ops* wide = avx2_ops();
    if (forced != nullptr && std::strcmp(forced, "avx2") == 0)
        return wide != nullptr ? wide : &kScalarOps;
    return wide != nullptr ? wide : &kScalarOps;
}

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

const Ops& active_ops() {
    static const Ops* selected = select_ops();
    return *selected;
}

}  // namespace ccd::kernels
