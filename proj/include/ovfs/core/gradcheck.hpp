#pragma once

// Central finite-difference gradient checking. The numeric side perturbs raw
// parameter storage and re-runs the forward closure, so it is independent of
// every backward implementation it validates.

#include <functional>
#include <string>
#include <vector>

#include "ovfs/core/tensor.hpp"

namespace ovfs {

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    long n_checked = 0;
    std::string worst;  // "param[i]: analytic vs numeric"

    explicit operator bool() const { return pass; }
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// f: () -> scalar Tensor, deterministic in the current parameter values.
inline GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::vector<NamedParam> params,
                                         double step = 1e-6, double tol = 1e-4) {
    for (auto& p : params) p.tensor.zero_grad();
    Tensor loss = f();
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite loss");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params)
        analytic.push_back(p.tensor.has_grad() ? p.tensor.grad() : std::vector<double>(std::size_t(p.tensor.numel()), 0.0));

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& storage = params[pi].tensor.data_mut();
        for (std::size_t i = 0; i < storage.size(); ++i) {
            double saved = storage[i];
            storage[i] = saved + step;
            double fp = f().item();
            storage[i] = saved - step;
            double fm = f().item();
            storage[i] = saved;
            double numeric = (fp - fm) / (2.0 * step);
            double a = analytic[pi][i];
            double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
            double rel = std::abs(a - numeric) / scale;
            ++report.n_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = params[pi].name + "[" + std::to_string(i) + "]: analytic " + std::to_string(a) +
                               " vs numeric " + std::to_string(numeric);
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace ovfs
