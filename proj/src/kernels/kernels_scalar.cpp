#include <cmath>
#include <cstring>

#include "aml/kernels.hpp"

// Reference kernels. These define the numerical contract; SIMD variants are
// tested against them.

namespace aml::kern {
namespace {

void s_add(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void s_sub(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void s_mul(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void s_scale(double* dst, const double* a, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = alpha * a[i];
}

void s_axpy(double* dst, const double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}

void s_mul_acc(double* dst, const double* x, const double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += x[i] * y[i];
}

void s_relu(double* dst, const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void s_relu_backward(double* dst, const double* a, const double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (a[i] > 0.0) dst[i] += g[i];
}

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double s_sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

// i-k-j order: each C row is a running sum of scaled B rows. The AVX2 variant
// follows the same order so results match bitwise.
void s_matmul_nn(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

void s_matmul_tn(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            if (aik == 0.0) continue;
            double* crow = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

void s_matmul_nt(double* c, const double* a, const double* b,
                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            c[i * n + j] = s_dot(a + i * k, b + j * k, k);
}

void s_adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                   double lr, double beta1, double beta2, double eps,
                   double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops table = {
        s_add,       s_sub,       s_mul,       s_scale,     s_axpy,
        s_mul_acc,   s_relu,      s_relu_backward,          s_dot,
        s_sum,       s_matmul_nn, s_matmul_tn, s_matmul_nt, s_adam_update,
    };
    return table;
}

}  // namespace aml::kern
