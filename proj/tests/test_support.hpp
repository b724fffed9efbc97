#pragma once

#include <cmath>
#include <functional>

#include "gridpose/tensor.hpp"

namespace gridpose::testing {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

inline double weighted_sum(const Tensor& t, const Tensor& w) {
    double acc = 0.0;
    for (size_t i = 0; i < t.v.size(); ++i) acc += t.v[i] * w.v[i];
    return acc;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
    return worst;
}

/// Central finite differences of a scalar function over `values`, compared
/// entry-wise against the analytic gradient. Returns the worst relative
/// error, with a small floor against vanishing denominators.
inline double fd_max_rel_err(std::vector<double>& values, const std::vector<double>& analytic,
                             const std::function<double()>& eval, double h = 1e-5) {
    double worst = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + h;
        const double up = eval();
        values[i] = keep - h;
        const double down = eval();
        values[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-4});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace gridpose::testing

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))
#define REQUIRE_NEAR(a, b, tol) REQUIRE(std::abs((a) - (b)) <= (tol))
