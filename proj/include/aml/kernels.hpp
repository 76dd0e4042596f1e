#pragma once

#include <cstddef>
#include <string>

namespace aml::kern {

// Dense f64 kernels behind the tensor engine. Each entry has a scalar
// reference implementation and may have SIMD variants; the active table is
// picked once at startup from CPU capabilities (override with the
// AMLDETECT_KERNEL env var: "scalar" or "avx2").
//
// Equivalence contract, checked by tests/test_kernels.cpp:
//   - elementwise ops, relu, scale, axpy, adam_update and the matmul family
//     produce bitwise-identical results across backends (the AVX2 variants
//     keep the scalar accumulation order and avoid FMA contraction);
//   - dot and sum use lane-parallel partial accumulators, so they agree with
//     the scalar reference only to rounding (tight relative tolerance).
struct Ops {
    // dst[i] = a[i] op b[i]
    void (*add)(double* dst, const double* a, const double* b, std::size_t n);
    void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
    void (*mul)(double* dst, const double* a, const double* b, std::size_t n);

    // dst[i] = alpha * a[i]
    void (*scale)(double* dst, const double* a, double alpha, std::size_t n);
    // dst[i] += alpha * x[i]
    void (*axpy)(double* dst, const double* x, double alpha, std::size_t n);
    // dst[i] += x[i] * y[i]
    void (*mul_acc)(double* dst, const double* x, const double* y, std::size_t n);
    // dst[i] = max(a[i], 0)
    void (*relu)(double* dst, const double* a, std::size_t n);
    // dst[i] += g[i] where a[i] > 0 (backward mask of relu)
    void (*relu_backward)(double* dst, const double* a, const double* g, std::size_t n);

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);

    // Row-major matrix products. C is overwritten.
    // nn: C[m x n] = A[m x k] * B[k x n]
    void (*matmul_nn)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);
    // tn: C[k x n] = A^T * B with A[m x k], B[m x n]
    void (*matmul_tn)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);
    // nt: C[m x n] = A * B^T with A[m x k], B[n x k]
    void (*matmul_nt)(double* c, const double* a, const double* b,
                      std::size_t m, std::size_t k, std::size_t n);

    // In-place Adam update on one parameter array. bc1/bc2 are the
    // bias-correction denominators 1 - beta^t for the current step.
    void (*adam_update)(double* p, const double* g, double* m, double* v, std::size_t n,
                        double lr, double beta1, double beta2, double eps,
                        double bc1, double bc2);
};

enum class Backend { scalar, avx2 };

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
bool cpu_has_avx2();
#endif

// Active table. Resolved on first use; then stable for the process unless
// set_backend is called (tests use it to compare lanes).
const Ops& ops();
Backend active_backend();
std::string backend_name(Backend b);
void set_backend(Backend b);

}  // namespace aml::kern
