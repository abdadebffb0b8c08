#include "canon/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace canon {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           GradCheckOptions opt) {
    for (auto& p : params) p.zero_grad();
    Tensor out = f();
    if (!std::isfinite(out.value())) throw EvalError("grad_check: non-finite objective");
    out.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& p : params)
        analytic.emplace_back(p.grad().begin(), p.grad().end());

    GradCheckReport report;
    Rng rng(opt.sample_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto data = params[pi].mutable_data();
        std::vector<std::size_t> coords;
        if (opt.max_coords < 0 || std::size_t(opt.max_coords) >= data.size()) {
            coords.resize(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) coords[i] = i;
        } else {
            for (long c = 0; c < opt.max_coords; ++c)
                coords.push_back(std::size_t(rng.below(data.size())));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        for (std::size_t ci : coords) {
            const double x0 = data[ci];
            const double h = opt.step_rel * std::max(1.0, std::abs(x0));
            double fp, fm;
            {
                NoGradGuard ng;
                data[ci] = x0 + h;
                fp = f().value();
                data[ci] = x0 - h;
                fm = f().value();
                data[ci] = x0;
            }
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw EvalError("grad_check: non-finite objective at perturbed point");
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][ci];
            const double denom = std::max({opt.denom_floor, std::abs(a), std::abs(numeric)});
            const double err = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst = "param" + std::to_string(pi) + "/" + std::to_string(ci);
            }
        }
    }
    return report;
}

}  // namespace canon
