#pragma once

#include <functional>
#include <string>
#include <vector>

#include "canon/rng.hpp"
#include "canon/tensor.hpp"

namespace canon {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::string worst;  // "param#/index" of the worst coordinate
};

struct GradCheckOptions {
    double step_rel = 1e-5;      // h = step_rel * max(1, |x|)
    long max_coords = -1;        // per parameter; -1 = all coordinates
    std::uint64_t sample_seed = 17;  // coordinate sampling when max_coords >= 0
    double denom_floor = 1e-2;   // relative-error denominator floor
};

// Compares the analytic gradient of f() (a scalar) against central finite
// differences at the current parameter values. f must be re-evaluable; it is
// called repeatedly under NoGradGuard for the numeric side.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           GradCheckOptions opt = {});

}  // namespace canon
