#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "canon/optim.hpp"
#include "canon/tensor.hpp"

using namespace canon;

TEST_CASE("cosine schedule endpoints and monotonicity") {
    CosineSchedule s{0.02, 1000};
    CHECK(s.lr_at(0) == 0.02);
    CHECK(s.lr_at(1000) == 0.0);
    double prev = s.lr_at(0);
    for (long t = 1; t <= 1000; ++t) {
        const double lr = s.lr_at(t);
        CHECK(lr <= prev + 1e-18);
        prev = lr;
    }
}

TEST_CASE("single adam step matches the closed form") {
    // One parameter theta = 1.5 with gradient g = 0.25:
    //   m1 = 0.1 g, v1 = 0.001 g^2, mhat = g, vhat = g^2
    //   theta' = theta - lr * g / (|g| + eps)
    Tensor theta = Tensor::scalar(1.5, true);
    theta.mutable_grad()[0] = 0.25;
    const double lr = 0.01;
    Adam opt({theta}, CosineSchedule{lr, 1000000000L});
    opt.step();
    const double expected = 1.5 - lr * 0.25 / (0.25 + 1e-8);
    CHECK(theta.value() == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("adam with zero learning rate leaves parameters untouched") {
    Tensor theta = Tensor::scalar(2.0, true);
    theta.mutable_grad()[0] = 1.0;
    Adam opt({theta}, CosineSchedule{0.0, 10});
    opt.step();
    CHECK(theta.value() == 2.0);
}

TEST_CASE("global norm clipping") {
    Tensor a = Tensor::from({2}, {3.0, 0.0}, true);
    Tensor b = Tensor::from({1}, {4.0}, true);
    a.mutable_grad()[0] = 3.0;
    b.mutable_grad()[0] = 4.0;
    Adam opt({a, b}, CosineSchedule{0.1, 10});
    const double norm = opt.clip_global_norm(1.0);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(a.grad()[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(b.grad()[0] == doctest::Approx(0.8).epsilon(1e-14));

    // below the threshold: untouched
    a.mutable_grad()[0] = 0.1;
    b.mutable_grad()[0] = 0.0;
    a.mutable_grad()[1] = 0.0;
    opt.clip_global_norm(1.0);
    CHECK(a.grad()[0] == 0.1);
}

TEST_CASE("adam moment buffers track parameter shapes") {
    Tensor a = Tensor::zeros({3, 4}, true);
    Adam opt({a}, CosineSchedule{0.01, 100});
    opt.zero_grad();
    opt.step();
    CHECK(a.size() == 12);
}
