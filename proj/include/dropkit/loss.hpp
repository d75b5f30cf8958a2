#pragma once

#include <cmath>

#include "dropkit/errors.hpp"

namespace dropkit {

enum class LossKind { logistic, quadratic };

/// Per-sample loss family plus L2 coefficient. The total regularizer is
/// (n*lambda/2)*||theta||^2 with the full-sample n, and it keeps that
/// coefficient when samples are dropped.
struct LossSpec {
    LossKind kind = LossKind::logistic;
    double lambda = 0.0;

    void validate() const {
        if (lambda < 0.0) raise(Errc::bad_config, "lambda must be >= 0");
    }
};

/// log(1 + e^z) without overflow for large |z|.
inline double log1p_exp(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

/// sigma(z) = 1/(1+e^-z), evaluated on the stable branch.
inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// sigma'(z) = sigma(z)(1-sigma(z)), the prediction variance.
inline double sigmoid_variance(double z) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
}

} // namespace dropkit
