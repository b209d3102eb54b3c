#pragma once

#include <cmath>
#include <string>

#include "stflow/tensor.hpp"

namespace stflow {

// Central finite differences: g[i] = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
// This is the oracle every hand-written backward pass is checked against.
template <typename T, typename F>
Tensor<T> finite_difference_gradient(F&& f, const Tensor<T>& x, T epsilon) {
    if (!(epsilon > T(0))) throw ConfigError("finite_difference_gradient: epsilon must be positive");
    Tensor<T> probe = x;
    Tensor<T> grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T orig = probe[i];
        probe[i] = orig + epsilon;
        const T up = f(static_cast<const Tensor<T>&>(probe));
        probe[i] = orig - epsilon;
        const T down = f(static_cast<const Tensor<T>&>(probe));
        probe[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_difference_gradient: non-finite function value at element " + std::to_string(i));
        }
        grad[i] = (up - down) / (T(2) * epsilon);
    }
    return grad;
}

// Largest elementwise mismatch between an analytic and a numeric gradient,
// measured as |a - n| / max(|a|, |n|). Elements whose absolute difference is
// below `abs_floor` count as matching; that floor absorbs the O(eps^2)
// truncation and rounding error on entries that are themselves ~0.
template <typename T>
double max_relative_error(const Tensor<T>& analytic, const Tensor<T>& numeric, double abs_floor = 1e-8) {
    if (analytic.shape() != numeric.shape()) {
        throw ShapeError("gradient shapes differ: " + shape_to_string(analytic.shape()) + " vs " +
                         shape_to_string(numeric.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double diff = std::abs(a - n);
        if (diff <= abs_floor) continue;
        const double rel = diff / std::max(std::abs(a), std::abs(n));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace stflow
