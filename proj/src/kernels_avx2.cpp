#include "ccd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define CCD_HAVE_AVX2_BUILD 1
#else
#define CCD_HAVE_AVX2_BUILD 0
#endif

#if CCD_HAVE_AVX2_BUILD

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ccd::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline __m256d abs_pd(__m256d v) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    return _mm256_and_pd(v, mask);
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

// mul+add kept separate (no FMA) so results are bitwise identical to the
// scalar reference; axpy is memory-bound so this costs nothing measurable
void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) x[i] *= a;
}

void gemv_avx2(const double* a, std::size_t m, std::size_t n, const double* x,
               double beta, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        const double acc = dot_avx2(a + i * n, x, n);
        y[i] = beta == 0.0 ? acc : beta * y[i] + acc;
    }
}

void gemv_t_avx2(const double* a, std::size_t m, std::size_t n, const double* x,
                 double beta, double* y) {
    if (beta == 0.0) {
        std::memset(y, 0, n * sizeof(double));
    } else if (beta != 1.0) {
        scale_avx2(beta, y, n);
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (x[i] != 0.0) axpy_avx2(x[i], a + i * n, y, n);
    }
}

void clamp_avx2(const double* x, const double* lo, const double* hi, double* out,
                std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        v = _mm256_max_pd(v, _mm256_loadu_pd(lo + i));
        v = _mm256_min_pd(v, _mm256_loadu_pd(hi + i));
        _mm256_storeu_pd(out + i, v);
    }
    for (; i < n; ++i) out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
}

double max_abs_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, abs_pd(_mm256_loadu_pd(x + i)));
    double r = hmax(acc);
    for (; i < n; ++i) r = std::max(r, std::fabs(x[i]));
    return r;
}

double max_abs_diff_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_max_pd(acc, abs_pd(d));
    }
    double r = hmax(acc);
    for (; i < n; ++i) r = std::max(r, std::fabs(x[i] - y[i]));
    return r;
}

void relu_avx2(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_mask_mul_avx2(const double* pre, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void elem_max_update_avx2(double* acc, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(acc + i,
                         _mm256_max_pd(_mm256_loadu_pd(acc + i), _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) acc[i] = std::max(acc[i], x[i]);
}

void comp_add_avx2(double* sum, double* comp, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d s = _mm256_loadu_pd(sum + i);
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d t = _mm256_add_pd(s, v);
        // branchless Neumaier: pick (s - t) + v when |s| >= |v|, else (v - t) + s
        const __m256d big_s = _mm256_cmp_pd(abs_pd(s), abs_pd(v), _CMP_GE_OQ);
        const __m256d err_s = _mm256_add_pd(_mm256_sub_pd(s, t), v);
        const __m256d err_v = _mm256_add_pd(_mm256_sub_pd(v, t), s);
        const __m256d err = _mm256_blendv_pd(err_v, err_s, big_s);
        _mm256_storeu_pd(comp + i, _mm256_add_pd(_mm256_loadu_pd(comp + i), err));
        _mm256_storeu_pd(sum + i, t);
    }
    for (; i < n; ++i) {
        const double s = sum[i];
        const double v = x[i];
        const double t = s + v;
        if (std::fabs(s) >= std::fabs(v)) {
            comp[i] += (s - t) + v;
        } else {
            comp[i] += (v - t) + s;
        }
        sum[i] = t;
    }
}

void csr_spmv_avx2(const std::int32_t* rowptr, const std::int32_t* col,
                   const double* val, std::size_t m, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        const std::int32_t lo = rowptr[i];
        const std::int32_t hi = rowptr[i + 1];
        __m256d acc = _mm256_setzero_pd();
        std::int32_t k = lo;
        for (; k + 4 <= hi; k += 4) {
            const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(col + k));
            const __m256d xv = _mm256_i32gather_pd(x, idx, 8);
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(val + k), xv, acc);
        }
        double r = hsum(acc);
        for (; k < hi; ++k) r += val[k] * x[col[k]];
        y[i] = r;
    }
}

constexpr Ops kAvx2Ops = {
    "avx2",
    dot_avx2,
    axpy_avx2,
    scale_avx2,
    gemv_avx2,
    gemv_t_avx2,
    clamp_avx2,
    max_abs_avx2,
    max_abs_diff_avx2,
    relu_avx2,
    relu_mask_mul_avx2,
    elem_max_update_avx2,
    comp_add_avx2,
    csr_spmv_avx2,
};

bool cpu_has_avx2() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const Ops* avx2_ops() {
    static const Ops* table = cpu_has_avx2() ? &kAvx2Ops : nullptr;
    return table;
}

}  // namespace ccd::kernels

#else  // !CCD_HAVE_AVX2_BUILD

namespace ccd::kernels {
const Ops* avx2_ops() { return nullptr; }
}  // namespace ccd::kernels

#endif
