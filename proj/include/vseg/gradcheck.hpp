#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

struct GradReport {
    std::string op_name;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string diagnostic;  // set when outputs go non-finite
};

// Maps leaf inputs to a scalar loss; rebuilt from scratch on every call.
using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Central finite differences (h = 1e-5) against reverse-mode gradients.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-12).
GradReport grad_check(const std::string& op_name, const GradFn& fn,
                      const std::vector<Tensor<double>>& inputs, double tol);

// Named check for the `gradcheck` command: every registered differentiable
// operation appears exactly once.
struct GradCheckCase {
    std::string name;
    std::function<GradReport()> run;
};

std::vector<GradCheckCase> standard_gradcheck_suite();

}  // namespace vseg
