#include "vseg/gradcheck.hpp"

#include <cmath>

namespace vseg {

GradReport grad_check(const std::string& op_name, const GradFn& fn,
                      const std::vector<Tensor<double>>& inputs, double tol) {
    GradReport report;
    report.op_name = op_name;
    report.tolerance = tol;

    // Fresh leaves so prior graph state cannot leak in.
    std::vector<Tensor<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) {
        leaves.push_back(Tensor<double>::from_data(in.shape(), in.data(), true));
    }

    Tensor<double> loss = fn(leaves);
    if (loss.numel() != 1) throw UsageError("grad_check: fn must return a scalar");
    if (!std::isfinite(loss.item())) {
        report.passed = false;
        report.max_relative_error = std::numeric_limits<double>::infinity();
        report.diagnostic = "non-finite forward value";
        return report;
    }
    loss.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) {
        analytic.push_back(leaf.grad().empty() ? std::vector<double>(static_cast<size_t>(leaf.numel()), 0.0)
                                               : leaf.grad());
    }

    const double h = 1e-5;
    double max_rel = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].mutable_data();
        for (size_t j = 0; j < data.size(); ++j) {
            const double orig = data[j];
            data[j] = orig + h;
            const double fp = [&] {
                NoGradGuard ng;
                return fn(leaves).item();
            }();
            data[j] = orig - h;
            const double fm = [&] {
                NoGradGuard ng;
                return fn(leaves).item();
            }();
            data[j] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                report.passed = false;
                report.max_relative_error = std::numeric_limits<double>::infinity();
                report.diagnostic = "non-finite perturbed value at input " + std::to_string(li) +
                                    " element " + std::to_string(j);
                return report;
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    report.max_relative_error = max_rel;
    report.passed = max_rel <= tol;
    return report;
}

}  // namespace vseg
