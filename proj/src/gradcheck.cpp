#include "smartedit/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "smartedit/errors.hpp"
#include "smartedit/rng.hpp"

namespace smartedit {

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& inputs, GradCheckOptions opts) {
    for (auto& in : inputs) in.zero_grad();
    Tensor y = f(inputs);
    if (y.size() != 1) throw InvariantViolation("grad_check: f must be scalar-valued");
    if (!std::isfinite(y.item())) return std::numeric_limits<double>::infinity();
    y.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& in : inputs) {
        if (in.requires_grad() && in.has_grad()) {
            analytic.push_back(in.grad());
        } else {
            analytic.emplace_back(static_cast<size_t>(in.size()), 0.0);
        }
    }

    double max_rel = 0.0;
    Rng pick(opts.subsample_seed, "gradcheck-subsample");
    for (size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t].requires_grad()) continue;
        auto& data = inputs[t].raw();
        const int64_t n = inputs[t].size();

        std::vector<int64_t> coords;
        if (opts.max_coords_per_input > 0 && n > opts.max_coords_per_input) {
            coords.reserve(static_cast<size_t>(opts.max_coords_per_input));
            for (int64_t i = 0; i < opts.max_coords_per_input; ++i)
                coords.push_back(pick.uniform_int(0, n - 1));
        } else {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        }

        for (int64_t c : coords) {
            const double orig = data[static_cast<size_t>(c)];
            data[static_cast<size_t>(c)] = orig + opts.h;
            const double fp = f(inputs).item();
            data[static_cast<size_t>(c)] = orig - opts.h;
            const double fm = f(inputs).item();
            data[static_cast<size_t>(c)] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                return std::numeric_limits<double>::infinity();
            const double numeric = (fp - fm) / (2.0 * opts.h);
            const double a = analytic[t][static_cast<size_t>(c)];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace smartedit
