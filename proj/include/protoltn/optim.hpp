#pragma once

// Adam optimizer over named parameters (bias-corrected first/second moments).

#include <cmath>
#include <cstddef>
#include <vector>

#include "protoltn/errors.hpp"
#include "protoltn/tensor.hpp"

namespace protoltn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(std::vector<Parameter> params, AdamConfig cfg = {}) : cfg_(cfg) {
        slots_.reserve(params.size());
        for (Parameter& p : params) {
            Slot s;
            s.param = std::move(p);
            s.m.assign(s.param.value.size(), 0.0);
            s.v.assign(s.param.value.size(), 0.0);
            slots_.push_back(std::move(s));
        }
    }

    std::size_t step_count() const { return step_; }

    // One update from the gradients left on the parameters by the last
    // backward pass.  A parameter with no gradient (it never joined a
    // recorded graph) is treated as having gradient zero.
    void step(double lr) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (Slot& s : slots_) {
            auto grad = s.param.value.grad();
            const std::size_t n = s.param.value.size();
            if (!grad.empty() && grad.size() != n)
                throw ContractError("adam: gradient shape does not match parameter " +
                                    s.param.name);
            auto data = s.param.value.mutable_data();
            for (std::size_t i = 0; i < n; ++i) {
                const double g = grad.empty() ? 0.0 : grad[i];
                s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
                s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = s.m[i] / bc1;
                const double v_hat = s.v[i] / bc2;
                data[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
        }
    }

private:
    struct Slot {
        Parameter param;
        std::vector<double> m, v;
    };

    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::size_t step_ = 0;
};

}  // namespace protoltn
