#pragma once

#include <functional>
#include <vector>

#include "smartedit/tensor.hpp"

namespace smartedit {

struct GradCheckOptions {
    double h = 1e-5;
    /// 0 checks every coordinate; otherwise a deterministic subsample of this
    /// many coordinates per input (seeded below).
    int64_t max_coords_per_input = 0;
    uint64_t subsample_seed = 0;
};

/// Compares the analytic gradient of a scalar-valued function against central
/// differences. Returns the maximum relative error over all checked
/// coordinates, with denominator max(|analytic|, |numeric|, 1e-8).
/// Non-finite values anywhere in the check yield +infinity.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& inputs, GradCheckOptions opts = {});

}  // namespace smartedit
