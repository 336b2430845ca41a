#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smartedit/tensor.hpp"

namespace smartedit {

/// One decoupled-weight-decay Adam update on a flat parameter array.
/// step_index is 1-based; bias correction uses it directly.
void adamw_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                std::span<double> v, double lr, double weight_decay, double beta1, double beta2,
                double eps, int64_t step_index);

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Linear warm-up over warmup_ratio * total_steps steps (0 disables).
    double warmup_ratio = 0.0;
    int64_t total_steps = 0;
};

class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg);

    /// Applies one update using the gradients currently on the parameters.
    /// Parameters without a gradient are skipped.
    void step();
    void zero_grad();

    int64_t step_count() const { return step_; }
    double current_lr() const;  // warm-up applied, for the upcoming step

    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    int64_t step_ = 0;
};

}  // namespace smartedit
