#include "canon/kernels.hpp"

#include <atomic>
#include <cmath>

namespace canon::kern {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void vadd_scalar(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_scalar(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_scalar(double* out, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_scalar(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

double max_scalar(const double* a, std::size_t n) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
    return m;
}

void adam_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bias1,
                 double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

std::atomic<bool> g_force_scalar{false};

}  // namespace

const Backend& scalar_backend() {
    static const Backend b{
        "scalar",    dot_scalar, axpy_scalar, scale_scalar, vadd_scalar,
        vsub_scalar, vmul_scalar, sum_scalar, max_scalar,   adam_scalar,
    };
    return b;
}

void force_scalar(bool v) { g_force_scalar.store(v, std::memory_order_relaxed); }

const Backend& active() {
    if (g_force_scalar.load(std::memory_order_relaxed)) return scalar_backend();
    if (avx2_available()) return avx2_backend();
    return scalar_backend();
}

}  // namespace canon::kern
