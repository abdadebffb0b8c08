#pragma once

#include <vector>

#include "canon/tensor.hpp"

namespace canon {

// Cosine decay from base_lr at step 0 to exactly 0 at total_steps.
struct CosineSchedule {
    double base_lr = 1e-3;
    long total_steps = 1;

    double lr_at(long step) const;
};

class Adam {
  public:
    Adam(std::vector<Tensor> params, CosineSchedule schedule, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);

    // Scales all gradients so their global L2 norm is at most max_norm.
    // Returns the pre-clip norm.
    double clip_global_norm(double max_norm);

    void step();
    void zero_grad();

    long step_count() const { return step_; }
    double last_lr() const { return last_lr_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    CosineSchedule schedule_;
    double beta1_, beta2_, eps_;
    long step_ = 0;
    double last_lr_ = 0.0;
};

}  // namespace canon
