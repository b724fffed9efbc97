#include "gridpose/optim.hpp"

namespace gridpose {

void adam_update(Parameter& param, const std::vector<double>& grad, const AdamHyper& hyper) {
    if (grad.size() != param.t.v.size())
        throw std::invalid_argument("adam_update: gradient size does not match parameter");
    for (double g : grad)
        if (!std::isfinite(g)) throw std::runtime_error("adam_update: non-finite gradient entry");

    param.step_count += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(param.step_count));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(param.step_count));
    for (size_t i = 0; i < grad.size(); ++i) {
        double& m = param.adam_m[i];
        double& v = param.adam_v[i];
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * grad[i];
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * grad[i] * grad[i];
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        param.t.v[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
}

}  // namespace gridpose
