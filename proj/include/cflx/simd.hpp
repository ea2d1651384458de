#pragma once

#include <cstddef>

// Runtime-dispatched arithmetic kernels. Scalar reference implementations
// always exist; an AVX2/FMA variant is selected at startup when the CPU
// supports it. Override with CFLX_SIMD=scalar|avx2.
namespace cflx::simd {

struct Kernels {
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // sum_i x[i]
    double (*sum)(const double* x, std::size_t n);
    // sum_i (x[i] - y[i])^2
    double (*sumsq_diff)(const double* x, const double* y, std::size_t n);
    // bias-corrected Adam update over n elements
    void (*adam_update)(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2);
};

const Kernels& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const Kernels& avx2_kernels();
#endif

// Active implementation (resolved once, thread-safe).
const Kernels& active();
const char* active_name();

bool cpu_has_avx2();

}  // namespace cflx::simd
