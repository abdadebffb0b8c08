#pragma once

#include <cstddef>

namespace canon::kern {

// Data-parallel inner loops used by the tensor layer. Each kernel has a
// scalar reference implementation and, where the hardware supports it, an
// AVX2+FMA variant selected once at startup. Elementwise kernels are
// bit-identical across backends; reductions (dot, sum) may differ in the
// last bits because the SIMD variants reassociate the accumulation.
struct Backend {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double* y, double a, const double* x, std::size_t n);
    // x[i] *= a
    void (*scale)(double* x, double a, std::size_t n);
    void (*vadd)(double* out, const double* a, const double* b, std::size_t n);
    void (*vsub)(double* out, const double* a, const double* b, std::size_t n);
    void (*vmul)(double* out, const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*max)(const double* a, std::size_t n);  // n >= 1
    // Fused Adam update. bias1/bias2 are the (1 - beta^t) correction terms.
    void (*adam_update)(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2);
};

const Backend& scalar_backend();
const Backend& avx2_backend();  // falls back to scalar when unsupported

// Active backend: AVX2 when the CPU supports avx2+fma and force_scalar(false).
const Backend& active();
bool avx2_available();
void force_scalar(bool v);

}  // namespace canon::kern
