#include "dropkit/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include <json.hpp>

#include "dropkit/rng.hpp"

namespace dropkit {

const char* sigma_mode_name(SigmaMode mode) {
    return mode == SigmaMode::identity ? "identity" : "hessian";
}

SigmaMode sigma_mode_from_name(const std::string& name) {
    if (name == "identity" || name == "I") return SigmaMode::identity;
    if (name == "hessian" || name == "H") return SigmaMode::hessian;
    raise(Errc::bad_config, "unknown sigma mode: " + name);
}

void CertificateConfig::validate() const {
    if (!(radius > 0.0)) raise(Errc::bad_config, "radius must be > 0");
    if (path_grid < 2) raise(Errc::bad_config, "path_grid must be >= 2");
    if (ball_samples < 1) raise(Errc::bad_config, "ball_samples must be >= 1");
    if (inflation < 1.0) raise(Errc::bad_config, "inflation must be >= 1");
}

namespace {

/// Whitening helpers for the ellipsoid metric. In identity mode every
/// transform is a no-op; in hessian mode Sigma is the retained Hessian at
/// theta_hat, handled through its eigendecomposition.
struct SigmaTransform {
    SigmaMode mode = SigmaMode::identity;
    Eigen::MatrixXd eigvecs;
    Eigen::VectorXd inv_sqrt; // eigenvalue^{-1/2}

    static SigmaTransform make(SigmaMode mode, const Eigen::MatrixXd& sigma) {
        SigmaTransform t;
        t.mode = mode;
        if (mode == SigmaMode::identity) return t;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
        if (solver.info() != Eigen::Success || solver.eigenvalues().minCoeff() <= 0.0)
            raise(Errc::singular_hessian, "Sigma metric is not positive definite");
        t.eigvecs = solver.eigenvectors();
        t.inv_sqrt = solver.eigenvalues().cwiseSqrt().cwiseInverse();
        return t;
    }

    /// ||w||_{Sigma^{-1}} = ||Sigma^{-1/2} w||_2.
    double dual_norm(const Eigen::VectorXd& w) const {
        if (mode == SigmaMode::identity) return w.norm();
        return (inv_sqrt.asDiagonal() * (eigvecs.transpose() * w)).norm();
    }

    /// Sigma^{-1/2} u; maps unit Euclidean directions onto the unit
    /// Sigma-sphere.
    Eigen::VectorXd unwhiten_direction(const Eigen::VectorXd& u) const {
        if (mode == SigmaMode::identity) return u;
        return eigvecs * (inv_sqrt.asDiagonal() * (eigvecs.transpose() * u));
    }

    /// Sigma^{-1/2} A Sigma^{-1/2}, symmetrized.
    Eigen::MatrixXd whiten_matrix(const Eigen::MatrixXd& a) const {
        if (mode == SigmaMode::identity) return a;
        const Eigen::MatrixXd half =
            inv_sqrt.asDiagonal() * (eigvecs.transpose() * a * eigvecs) *
            inv_sqrt.asDiagonal();
        return 0.5 * (half + half.transpose());
    }
};

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric,
                                                          Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

double operator_norm(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric,
                                                          Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::VectorXd unit_gaussian_direction(Xoshiro256pp& rng, Eigen::Index d) {
    Eigen::VectorXd u(d);
    for (;;) {
        for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal();
        const double norm = u.norm();
        if (norm > 1e-12) return u / norm;
    }
}

} // namespace

CurvatureDriftEstimate estimate_ch(const ModelState& state, const DropSet& drop,
                                   const CertificateConfig& config) {
    config.validate();
    const Eigen::VectorXd delta = estimate_ns(state, drop).delta;
    const IndexList retained = retained_after_drop(drop, state.n());
    const Eigen::MatrixXd base =
        hessian(*state.data, state.spec, state.theta, retained);
    const SigmaTransform sigma = SigmaTransform::make(config.sigma_mode, base);

    CurvatureDriftEstimate estimate;
    estimate.path_values.reserve(static_cast<std::size_t>(config.path_grid) + 1);
    double raw_max = 0.0;
    for (int j = 0; j <= config.path_grid; ++j) {
        const double t = static_cast<double>(j) / config.path_grid;
        const Eigen::VectorXd point = state.theta + t * delta;
        const Eigen::MatrixXd at_point =
            hessian(*state.data, state.spec, point, retained);
        // H^{-1}g is -delta; the sign washes out in the norm
        const double value = sigma.dual_norm((at_point - base) * delta);
        estimate.path_values.push_back(value);
        raw_max = std::max(raw_max, value);
    }
    estimate.c_h = config.inflation * raw_max;
    return estimate;
}

CurvatureFloorEstimate estimate_cop(const ModelState& state, const DropSet& drop,
                                    const CertificateConfig& config) {
    config.validate();
    const Eigen::VectorXd delta = estimate_ns(state, drop).delta;
    const Eigen::VectorXd center = state.theta + delta;
    const IndexList retained = retained_after_drop(drop, state.n());
    const Eigen::MatrixXd base =
        hessian(*state.data, state.spec, state.theta, retained);
    const SigmaTransform sigma = SigmaTransform::make(config.sigma_mode, base);

    Xoshiro256pp rng(seed_mix(config.seed, 0xB0A11u));

    CurvatureFloorEstimate estimate;
    estimate.eigen_floors.reserve(static_cast<std::size_t>(config.ball_samples) + 1);

    const auto floor_at = [&](const Eigen::VectorXd& point) {
        const Eigen::MatrixXd at_point =
            hessian(*state.data, state.spec, point, retained);
        return min_eigenvalue(sigma.whiten_matrix(at_point));
    };

    estimate.eigen_floors.push_back(floor_at(center));

    const int lipschitz_budget = std::min(config.ball_samples, 16);
    for (int m = 0; m < config.ball_samples; ++m) {
        const Eigen::VectorXd u = unit_gaussian_direction(rng, state.d());
        const Eigen::VectorXd offset = config.radius * sigma.unwhiten_direction(u);
        estimate.eigen_floors.push_back(floor_at(center + offset));
        if (m < lipschitz_budget) {
            const Eigen::VectorXd chord = offset.normalized();
            const Eigen::MatrixXd drift = third_directional(
                *state.data, state.spec, center, chord, retained);
            estimate.chord_lipschitz =
                std::max(estimate.chord_lipschitz,
                         operator_norm(sigma.whiten_matrix(drift)));
        }
    }

    const double min_floor =
        *std::min_element(estimate.eigen_floors.begin(), estimate.eigen_floors.end());
    if (min_floor <= 0.0)
        raise(Errc::non_convex_ball,
              "sampled curvature floor is not positive inside the certificate ball");
    estimate.c_op = config.inflation / min_floor;
    return estimate;
}

Certificate certify_ns(const ModelState& state, const DropSet& drop,
                       const CertificateConfig& config) {
    Certificate cert;
    cert.radius = config.radius;
    cert.sigma_mode = config.sigma_mode;
    cert.drift = estimate_ch(state, drop, config);
    cert.floor = estimate_cop(state, drop, config);
    cert.c_h = cert.drift.c_h;
    cert.c_op = cert.floor.c_op;
    cert.condition_ok = cert.c_h * cert.c_op < config.radius;
    cert.bound = cert.condition_ok ? cert.c_h * cert.c_op
                                   : std::numeric_limits<double>::infinity();
    cert.sampled = true;
    return cert;
}

LegacyBound legacy_bound(const ModelState& state, const DropSet& drop, double lambda) {
    drop.validate(state.n());
    const Eigen::Index n = state.n();
    const IndexList retained = retained_after_drop(drop, n);

    LegacyBound legacy;
    legacy.k = drop.k();
    for (Eigen::Index i = 0; i < n; ++i)
        legacy.c_ell = std::max(legacy.c_ell, std::abs(state.alphas[i]) *
                                                  state.data->features.row(i).norm());

    // coarse sampled Hessian-Lipschitz constant on [0, 2*theta_hat]
    Xoshiro256pp rng(seed_mix(0xC11Fu, static_cast<std::uint64_t>(n)));
    double lip = 0.0;
    for (int j = 0; j < 8; ++j) {
        const Eigen::VectorXd point = (2.0 * j / 7.0) * state.theta;
        for (int e = 0; e < 16; ++e) {
            const Eigen::VectorXd dir = unit_gaussian_direction(rng, state.d());
            lip = std::max(lip, operator_norm(third_directional(
                                    *state.data, state.spec, point, dir, retained)));
        }
    }
    legacy.c_lip = 1.1 * lip;

    if (lambda > 0.0) {
        legacy.c_op_global = 1.0 / (static_cast<double>(n) * lambda);
        legacy.bound = 0.5 * legacy.c_lip * std::pow(legacy.c_op_global, 3) *
                       static_cast<double>(legacy.k) * static_cast<double>(legacy.k) *
                       legacy.c_ell * legacy.c_ell;
    } else {
        // no global curvature floor without regularization
        legacy.c_op_global = std::numeric_limits<double>::infinity();
        legacy.bound = std::numeric_limits<double>::infinity();
    }
    return legacy;
}

namespace {

nlohmann::json real_or_inf(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

} // namespace

std::string certificate_to_json(const Certificate& cert) {
    nlohmann::json out;
    out["schema"] = "dropkit/1";
    out["c_h"] = real_or_inf(cert.c_h);
    out["c_op"] = real_or_inf(cert.c_op);
    out["condition_ok"] = cert.condition_ok;
    out["bound"] = real_or_inf(cert.bound);
    out["sampled"] = cert.sampled;
    out["radius"] = cert.radius;
    out["sigma_mode"] = sigma_mode_name(cert.sigma_mode);
    out["diagnostics"]["path_values"] = cert.drift.path_values;
    out["diagnostics"]["eigen_floors"] = cert.floor.eigen_floors;
    out["diagnostics"]["chord_lipschitz"] = cert.floor.chord_lipschitz;
    return out.dump();
}

} // namespace dropkit
