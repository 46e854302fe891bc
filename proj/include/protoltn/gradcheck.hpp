#pragma once

// Finite-difference validation of reverse-mode gradients.

#include <cmath>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

// Compares the analytic gradient of a scalar-valued function f at x against
// central finite differences.  Returns the max over coordinates of
// |analytic - numeric| / max(1, |analytic|).  f is called once on a
// requires-grad leaf (to record the graph) and then 2n times on perturbed
// constants (forward only), so it must accept arbitrary tensors of x's shape.
template <typename F>
double grad_check(F&& f, const Tensor& x, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4))
        throw ContractError("grad_check: eps must lie in [1e-7, 1e-4]");
    if (!x.defined()) throw ContractError("grad_check: undefined input");

    const std::vector<double> base(x.data().begin(), x.data().end());

    Tape tape;
    Tensor xv = tape.leaf(x.shape(), base);
    Tensor y = f(xv);
    if (!y.defined() || y.size() != 1)
        throw ContractError("grad_check: f must produce a scalar");

    std::vector<double> analytic(base.size(), 0.0);
    if (y.tape() == &tape) {
        tape.backward(y);
        analytic.assign(xv.grad().begin(), xv.grad().end());
    } else if (y.tape() != nullptr) {
        throw ContractError("grad_check: f routed the input onto a foreign tape");
    }
    // y.tape() == nullptr means f is constant in x; the analytic gradient is 0.

    double max_err = 0.0;
    std::vector<double> pt = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        pt[i] = base[i] + eps;
        const double fp = f(Tensor::constant(x.shape(), pt)).item();
        pt[i] = base[i] - eps;
        const double fm = f(Tensor::constant(x.shape(), pt)).item();
        pt[i] = base[i];
        const double numeric = (fp - fm) / (2.0 * eps);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        if (err > max_err) max_err = err;
    }
    return max_err;
}

}  // namespace protoltn
