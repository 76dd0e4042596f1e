// AVX2 variants. Compiled with -mavx2 only (no -mfma): keeping mul/add split
// preserves the scalar rounding, so every kernel except dot/sum is bitwise
// equal to the reference. Guarded at runtime by cpu_has_avx2().

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "aml/kernels.hpp"

namespace aml::kern {
namespace {

void v_add(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void v_sub(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void v_mul(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void v_scale(double* dst, const double* a, double alpha, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
    for (; i < n; ++i) dst[i] = alpha * a[i];
}

void v_axpy(double* dst, const double* x, double alpha, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_loadu_pd(dst + i);
        d = _mm256_add_pd(d, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(dst + i, d);
    }
    for (; i < n; ++i) dst[i] += alpha * x[i];
}

void v_mul_acc(double* dst, const double* x, const double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_loadu_pd(dst + i);
        d = _mm256_add_pd(d, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(dst + i, d);
    }
    for (; i < n; ++i) dst[i] += x[i] * y[i];
}

void v_relu(double* dst, const double* a, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
    for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void v_relu_backward(double* dst, const double* a, const double* g, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(a + i), zero, _CMP_GT_OQ);
        __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), add));
    }
    for (; i < n; ++i)
        if (a[i] > 0.0) dst[i] += g[i];
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double v_dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double v_sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

// Same i-k-j row updates as the scalar kernel, 4 columns per step.
void row_axpy(double* crow, const double* brow, double aik, std::size_t n) {
    const __m256d va = _mm256_set1_pd(aik);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d c = _mm256_loadu_pd(crow + j);
        c = _mm256_add_pd(c, _mm256_mul_pd(va, _mm256_loadu_pd(brow + j)));
        _mm256_storeu_pd(crow + j, c);
    }
    for (; j < n; ++j) crow[j] += aik * brow[j];
}

void v_matmul_nn(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            if (aik == 0.0) continue;
            row_axpy(crow, b + kk * n, aik, n);
        }
    }
}

void v_matmul_tn(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            if (aik == 0.0) continue;
            row_axpy(c + kk * n, brow, aik, n);
        }
    }
}

void v_matmul_nt(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] = v_dot(a + i * k, b + j * k, k);
}

void v_adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                   double lr, double beta1, double beta2, double eps,
                   double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vlr = _mm256_set1_pd(lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(vb1c, gi));
        __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vb2c, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        __m256d mhat = _mm256_div_pd(mi, vbc1);
        __m256d vhat = _mm256_div_pd(vi, vbc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops table = {
        v_add,       v_sub,       v_mul,       v_scale,     v_axpy,
        v_mul_acc,   v_relu,      v_relu_backward,          v_dot,
        v_sum,       v_matmul_nn, v_matmul_tn, v_matmul_nt, v_adam_update,
    };
    return table;
}

bool cpu_has_avx2() { return __builtin_cpu_supports("avx2"); }

}  // namespace aml::kern

#endif  // x86_64
