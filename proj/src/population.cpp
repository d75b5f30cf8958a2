#include "dropkit/population.hpp"

#include <cmath>
#include <functional>

#include "dropkit/errors.hpp"
#include "dropkit/loss.hpp"

namespace dropkit {

namespace {

/// gamma(z) = e^z (1-e^z) / (1+e^z)^3 = beta(z) (1 - 2 sigma(z)), on the
/// overflow-free branch.
double logistic_third(double z) {
    const double s = sigmoid(z);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
}

double gauss_density(double z) {
    return std::exp(-0.5 * z * z) * 0.39894228040143267794; // 1/sqrt(2*pi)
}

struct Quadrature {
    const std::function<double(double)>& f;
    int max_depth;

    double recurse(double lo, double hi, double flo, double fmid, double fhi,
                   double whole, double tol, int depth) const {
        const double mid = 0.5 * (lo + hi);
        const double lmid = 0.5 * (lo + mid);
        const double rmid = 0.5 * (mid + hi);
        const double flm = f(lmid);
        const double frm = f(rmid);
        const double h = hi - lo;
        const double left = h / 12.0 * (flo + 4.0 * flm + fmid);
        const double right = h / 12.0 * (fmid + 4.0 * frm + fhi);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
        if (depth >= max_depth)
            raise(Errc::quadrature_failure, "adaptive quadrature tolerance unmet");
        return recurse(lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1) +
               recurse(mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1);
    }

    double integrate(double lo, double hi, double tol) const {
        const double mid = 0.5 * (lo + hi);
        const double flo = f(lo);
        const double fmid = f(mid);
        const double fhi = f(hi);
        const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        return recurse(lo, hi, flo, fmid, fhi, whole, tol, 0);
    }
};

/// E[h(Z) gamma(tZ)] for even h(z)*gamma(tz), Z ~ N(0,1).
double gaussian_expectation(double t, int power) {
    const std::function<double(double)> integrand = [t, power](double z) {
        double zp = z;
        for (int j = 1; j < power; ++j) zp *= z;
        return zp * logistic_third(t * z) * gauss_density(z);
    };
    Quadrature quad{integrand, 48};
    // Integrand is even with mass on scales min(1, 1/t); panels no wider than
    // the finest scale keep the adaptive refinement from skipping the bump.
    // The Gaussian tail beyond 40 is below 1e-300.
    const double width = 1.0 / std::max(1.0, t);
    const int panels = static_cast<int>(std::ceil(40.0 / width));
    const double tol = std::max(1e-12 / panels, 1e-15);
    double total = 0.0;
    for (int p = 0; p < panels; ++p)
        total += quad.integrate(p * width, std::min((p + 1) * width, 40.0), tol);
    return 2.0 * total;
}

} // namespace

ThirdMomentCoeffs population_third_coeffs(double t) {
    if (!(t > 0.0)) raise(Errc::bad_config, "population_third_coeffs requires t > 0");
    ThirdMomentCoeffs coeffs;
    coeffs.a = gaussian_expectation(t, 3);     // E[Z^3 gamma(tZ)], < 0 for t > 0
    coeffs.b = gaussian_expectation(t, 1) / t; // (1/t) E[Z gamma(tZ)], -> -1/8 at 0+
    return coeffs;
}

Eigen::VectorXd population_third_contraction(const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& v) {
    if (v.size() != theta.size())
        raise(Errc::dimension_mismatch, "theta/v length mismatch");
    const double t = theta.norm();
    if (t == 0.0) raise(Errc::zero_theta, "contraction undefined at theta = 0");

    const ThirdMomentCoeffs coeffs = population_third_coeffs(t);
    // full tensor: E[gamma x^(x)3] = cubic * theta^(x)3 + b * sym(I (x) theta),
    // cubic = (E[Z^3 gamma] - 3 E[Z gamma]) / t^3 = (a - 3*b*t) / t^3
    const double cubic = (coeffs.a - 3.0 * coeffs.b * t) / (t * t * t);
    const double aligned = theta.dot(v);
    return cubic * aligned * aligned * theta +
           coeffs.b * (v.squaredNorm() * theta + 2.0 * aligned * v);
}

} // namespace dropkit
