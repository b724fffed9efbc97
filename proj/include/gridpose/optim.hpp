#pragma once

#include "gridpose/tensor.hpp"

namespace gridpose {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Trainable tensor plus its Adam moment estimates. Gradients accumulate in
/// t.grad; step_count advances by exactly one per adam_update.
struct Parameter {
    Tensor t;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    int64_t step_count = 0;

    Parameter() = default;
    explicit Parameter(Tensor init)
        : t(std::move(init)), adam_m(t.v.size(), 0.0), adam_v(t.v.size(), 0.0) {
        t.ensure_grad();
    }

    void zero_grad() { t.zero_grad(); }
    int64_t numel() const { return t.numel(); }
};

/// Standard Adam with bias correction. Rejects non-finite gradient entries.
void adam_update(Parameter& param, const std::vector<double>& grad, const AdamHyper& hyper);

/// Convenience overload consuming the gradient accumulated in param.t.grad.
inline void adam_update(Parameter& param, const AdamHyper& hyper) { adam_update(param, param.t.grad, hyper); }

}  // namespace gridpose
