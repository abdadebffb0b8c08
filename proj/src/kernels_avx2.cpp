#include "canon/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#define CANON_X86 1
#include <immintrin.h>
#else
#define CANON_X86 0
#endif

#include <cmath>

namespace canon::kern {

#if CANON_X86 && (defined(__GNUC__) || defined(__clang__))

namespace {

__attribute__((target("avx2,fma")))
double hsum(__m256d acc) {
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

__attribute__((target("avx2,fma")))
double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// mul+add rather than fmadd so the result is bit-identical to the scalar
// axpy; gradient accumulation order must not depend on the backend.
__attribute__((target("avx2,fma")))
void axpy_avx2(double* y, double a, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2,fma")))
void scale_avx2(double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    }
    for (; i < n; ++i) x[i] *= a;
}

__attribute__((target("avx2,fma")))
void vadd_avx2(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

__attribute__((target("avx2,fma")))
void vsub_avx2(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

__attribute__((target("avx2,fma")))
void vmul_avx2(double* out, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

__attribute__((target("avx2,fma")))
double sum_avx2(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

__attribute__((target("avx2,fma")))
double max_avx2(const double* a, std::size_t n) {
    if (n < 8) {
        double m = a[0];
        for (std::size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
        return m;
    }
    __m256d acc = _mm256_loadu_pd(a);
    std::size_t i = 4;
    for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    lo = _mm_max_pd(lo, hi);
    __m128d swap = _mm_unpackhi_pd(lo, lo);
    double m = _mm_cvtsd_f64(_mm_max_sd(lo, swap));
    for (; i < n; ++i) m = a[i] > m ? a[i] : m;
    return m;
}

// Adam is elementwise: per-lane arithmetic (incl. IEEE sqrt) matches the
// scalar kernel bit for bit, except the scalar tail which uses the same ops.
__attribute__((target("avx2,fma")))
void adam_avx2(double* p, const double* g, double* m, double* v, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bias1,
               double bias2) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d v1mb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d v1mb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vbias1 = _mm256_set1_pd(bias1);
    const __m256d vbias2 = _mm256_set1_pd(bias2);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(v1mb1, gi));
        __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(v1mb2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vbias1);
        const __m256d vhat = _mm256_div_pd(vi, vbias2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        const __m256d upd = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
    }
    for (; i < n; ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

bool avx2_available() {
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
}

const Backend& avx2_backend() {
    static const Backend b{
        "avx2",    dot_avx2,  axpy_avx2, scale_avx2, vadd_avx2,
        vsub_avx2, vmul_avx2, sum_avx2,  max_avx2,   adam_avx2,
    };
    if (!avx2_available()) return scalar_backend();
    return b;
}

#else

bool avx2_available() { return false; }
const Backend& avx2_backend() { return scalar_backend(); }

#endif

}  // namespace canon::kern
