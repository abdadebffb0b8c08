#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "canon/kernels.hpp"
#include "canon/rng.hpp"

using namespace canon;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("scalar and simd backends agree") {
    const auto& sc = kern::scalar_backend();
    const auto& vx = kern::avx2_backend();
    INFO("simd backend: ", vx.name);
    Rng rng(123);

    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 17u, 64u, 255u, 1024u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);

        // reductions: tolerance, the simd variant reassociates
        CHECK(sc.dot(a.data(), b.data(), n) ==
              doctest::Approx(vx.dot(a.data(), b.data(), n)).epsilon(1e-13));
        CHECK(sc.sum(a.data(), n) == doctest::Approx(vx.sum(a.data(), n)).epsilon(1e-13));
        CHECK(sc.max(a.data(), n) == vx.max(a.data(), n));

        // elementwise: bit-identical
        auto y1 = random_vec(rng, n);
        auto y2 = y1;
        sc.axpy(y1.data(), 0.37, a.data(), n);
        vx.axpy(y2.data(), 0.37, a.data(), n);
        CHECK(y1 == y2);

        y2 = y1;
        sc.scale(y1.data(), -1.25, n);
        vx.scale(y2.data(), -1.25, n);
        CHECK(y1 == y2);

        std::vector<double> o1(n), o2(n);
        sc.vadd(o1.data(), a.data(), b.data(), n);
        vx.vadd(o2.data(), a.data(), b.data(), n);
        CHECK(o1 == o2);
        sc.vsub(o1.data(), a.data(), b.data(), n);
        vx.vsub(o2.data(), a.data(), b.data(), n);
        CHECK(o1 == o2);
        sc.vmul(o1.data(), a.data(), b.data(), n);
        vx.vmul(o2.data(), a.data(), b.data(), n);
        CHECK(o1 == o2);
    }
}

TEST_CASE("adam kernel matches between backends bit for bit") {
    const auto& sc = kern::scalar_backend();
    const auto& vx = kern::avx2_backend();
    Rng rng(7);
    const std::size_t n = 133;
    auto p1 = random_vec(rng, n);
    auto g = random_vec(rng, n);
    auto m1 = random_vec(rng, n);
    std::vector<double> v1(n, 0.0);
    for (double& x : v1) x = rng.uniform(0.0, 1.0);
    auto p2 = p1;
    auto m2 = m1;
    auto v2 = v1;
    sc.adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1,
                   0.001999);
    vx.adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1,
                   0.001999);
    CHECK(p1 == p2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
}

TEST_CASE("force_scalar switches the active backend") {
    kern::force_scalar(true);
    CHECK(std::string(kern::active().name) == "scalar");
    kern::force_scalar(false);
    if (kern::avx2_available()) CHECK(std::string(kern::active().name) == "avx2");
}

TEST_CASE("dot against a compensated reference") {
    // Kahan-summed long double reference keeps the oracle independent of
    // either backend's accumulation order.
    Rng rng(99);
    const std::size_t n = 4096;
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < n; ++i) acc += (long double)a[i] * (long double)b[i];
    const double ref = double(acc);
    CHECK(kern::scalar_backend().dot(a.data(), b.data(), n) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(kern::avx2_backend().dot(a.data(), b.data(), n) == doctest::Approx(ref).epsilon(1e-12));
}
