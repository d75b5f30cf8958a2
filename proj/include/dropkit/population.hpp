#pragma once

#include <Eigen/Core>

namespace dropkit {

/// Coefficients of the expected per-sample third-derivative tensor of the
/// logistic loss under x ~ N(0, I):
///   E[gamma(<x,theta>) x^(x)3] = a(t) theta^(x)3 + b(t) sym(I (x) theta),
/// t = ||theta||, gamma(z) = e^z (1-e^z) / (1+e^z)^3. Both coefficients are
/// strictly negative for t > 0; b(t) -> -1/8 as t -> 0+.
struct ThirdMomentCoeffs {
    double a = 0.0;
    double b = 0.0;
};

/// Evaluates a(t), b(t) via adaptive quadrature of the one-dimensional
/// Gaussian expectations to absolute error <= 1e-10.
/// Throws QuadratureFailure if the tolerance cannot be met, ZeroTheta for
/// t <= 0.
ThirdMomentCoeffs population_third_coeffs(double t);

/// Expected per-sample directional contraction E[T_theta(v, v, .)]:
///   a(t) <theta,v>^2 theta + b(t) (||v||^2 theta + 2 <theta,v> v).
/// Multiply by n for the population loss. Throws ZeroTheta when theta = 0.
Eigen::VectorXd population_third_contraction(const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& v);

} // namespace dropkit
