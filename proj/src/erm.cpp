#include "dropkit/erm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dropkit {

IndexList all_samples(Eigen::Index n) {
    IndexList indices(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
    return indices;
}

IndexList retained_after_drop(const DropSet& drop, Eigen::Index n) {
    drop.validate(n);
    IndexList retained;
    retained.reserve(static_cast<std::size_t>(n - drop.k()));
    std::size_t cursor = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (cursor < drop.indices.size() && drop.indices[cursor] == i) {
            ++cursor;
            continue;
        }
        retained.push_back(i);
    }
    return retained;
}

namespace {

/// 0/1 membership mask for a retained subset; rejects out-of-range and
/// duplicate indices.
Eigen::VectorXd retained_mask(const IndexList& retained, Eigen::Index n) {
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(n);
    for (const Eigen::Index i : retained) {
        if (i < 0 || i >= n)
            raise(Errc::invalid_subset, "retained index out of range: " + std::to_string(i));
        if (mask[i] != 0.0)
            raise(Errc::invalid_subset, "duplicate retained index: " + std::to_string(i));
        mask[i] = 1.0;
    }
    return mask;
}

void check_theta(const Dataset& data, const Eigen::VectorXd& theta) {
    if (theta.size() != data.d())
        raise(Errc::dimension_mismatch, "theta length does not match feature dimension");
    if (!theta.allFinite()) raise(Errc::numerical_overflow, "non-finite theta");
}

} // namespace

double loss_value(const Dataset& data, const LossSpec& spec,
                  const Eigen::VectorXd& theta, const IndexList& retained) {
    check_theta(data, theta);
    const Eigen::VectorXd mask = retained_mask(retained, data.n());
    const Eigen::VectorXd margins = data.features * theta;

    double total = 0.0;
    if (spec.kind == LossKind::logistic) {
        for (const Eigen::Index i : retained)
            total += log1p_exp(margins[i]) - data.labels[i] * margins[i];
    } else {
        for (const Eigen::Index i : retained) {
            const double r = margins[i] - data.labels[i];
            total += 0.5 * r * r;
        }
    }
    total += 0.5 * static_cast<double>(data.n()) * spec.lambda * theta.squaredNorm();
    if (!std::isfinite(total)) raise(Errc::numerical_overflow, "non-finite loss");
    return total;
}

Eigen::VectorXd gradient(const Dataset& data, const LossSpec& spec,
                         const Eigen::VectorXd& theta, const IndexList& retained) {
    check_theta(data, theta);
    const Eigen::VectorXd mask = retained_mask(retained, data.n());
    const Eigen::VectorXd margins = data.features * theta;

    Eigen::VectorXd coeffs(data.n());
    if (spec.kind == LossKind::logistic) {
        for (Eigen::Index i = 0; i < data.n(); ++i)
            coeffs[i] = mask[i] * (sigmoid(margins[i]) - data.labels[i]);
    } else {
        coeffs = mask.cwiseProduct(margins - data.labels);
    }
    Eigen::VectorXd grad = data.features.transpose() * coeffs;
    grad += static_cast<double>(data.n()) * spec.lambda * theta;
    if (!grad.allFinite()) raise(Errc::numerical_overflow, "non-finite gradient");
    return grad;
}

Eigen::MatrixXd hessian(const Dataset& data, const LossSpec& spec,
                        const Eigen::VectorXd& theta, const IndexList& retained) {
    check_theta(data, theta);
    const Eigen::VectorXd mask = retained_mask(retained, data.n());
    const Eigen::Index d = data.d();

    Eigen::VectorXd weights(data.n());
    if (spec.kind == LossKind::logistic) {
        const Eigen::VectorXd margins = data.features * theta;
        for (Eigen::Index i = 0; i < data.n(); ++i)
            weights[i] = mask[i] * sigmoid_variance(margins[i]);
    } else {
        weights = mask;
    }

    const Eigen::MatrixXd scaled = weights.cwiseSqrt().asDiagonal() * data.features;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
    hess.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    hess = hess.selfadjointView<Eigen::Lower>(); // mirror: symmetric bitwise
    hess.diagonal().array() += static_cast<double>(data.n()) * spec.lambda;
    if (!hess.allFinite()) raise(Errc::numerical_overflow, "non-finite hessian");
    return hess;
}

Eigen::MatrixXd third_directional(const Dataset& data, const LossSpec& spec,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& direction,
                                  const IndexList& retained) {
    check_theta(data, theta);
    if (direction.size() != data.d())
        raise(Errc::dimension_mismatch, "direction length does not match feature dimension");
    const Eigen::VectorXd mask = retained_mask(retained, data.n());
    const Eigen::Index d = data.d();

    if (spec.kind == LossKind::quadratic) return Eigen::MatrixXd::Zero(d, d);

    const Eigen::VectorXd margins = data.features * theta;
    const Eigen::VectorXd along = data.features * direction;
    Eigen::VectorXd weights(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double yhat = sigmoid(margins[i]);
        // gamma(z) = beta(z) * (1 - 2*yhat), the logistic third derivative
        weights[i] = mask[i] * yhat * (1.0 - yhat) * (1.0 - 2.0 * yhat) * along[i];
    }
    Eigen::MatrixXd contraction =
        data.features.transpose() * (weights.asDiagonal() * data.features);
    contraction = 0.5 * (contraction + contraction.transpose()).eval();
    if (!contraction.allFinite())
        raise(Errc::numerical_overflow, "non-finite third-derivative contraction");
    return contraction;
}

void FitConfig::validate() const {
    if (!(grad_tol > 0.0)) raise(Errc::bad_config, "grad_tol must be > 0");
    if (max_iter < 1) raise(Errc::bad_config, "max_iter must be >= 1");
    if (!(damping > 0.0) || damping > 1.0) raise(Errc::bad_config, "damping must be in (0, 1]");
}

namespace {

FitReport newton_minimize(const Dataset& data, const LossSpec& spec,
                          const IndexList& retained, const FitConfig& config) {
    config.validate();
    spec.validate();
    const Eigen::Index d = data.d();
    if (spec.lambda == 0.0 && static_cast<Eigen::Index>(retained.size()) < d)
        raise(Errc::singular_hessian,
              "unregularized fit with fewer retained samples than dimensions");

    Eigen::VectorXd theta = config.warm_start ? *config.warm_start : Eigen::VectorXd::Zero(d);
    if (theta.size() != d) raise(Errc::dimension_mismatch, "warm_start length mismatch");

    double current_loss = loss_value(data, spec, theta, retained);
    Eigen::VectorXd grad = gradient(data, spec, theta, retained);
    double grad_norm = grad.norm();

    FitReport report;
    report.theta = theta;
    report.final_grad_norm = grad_norm;

    int iterations = 0;
    while (grad_norm > config.grad_tol && iterations < config.max_iter) {
        const Eigen::MatrixXd hess = hessian(data, spec, theta, retained);
        Eigen::LLT<Eigen::MatrixXd> llt(hess);
        if (llt.info() != Eigen::Success)
            raise(Errc::singular_hessian, "Newton system is not positive definite");
        const Eigen::VectorXd step = llt.solve(grad);

        double step_scale = config.damping;
        bool accepted = false;
        Eigen::VectorXd candidate;
        double candidate_loss = 0.0;
        std::optional<Eigen::VectorXd> candidate_grad;
        for (int halving = 0; halving <= 50; ++halving) {
            candidate = theta - step_scale * step;
            candidate_loss = loss_value(data, spec, candidate, retained);
            candidate_grad.reset();
            if (candidate_loss <= current_loss) {
                accepted = true;
                break;
            }
            // Near the optimum the true decrease sinks below the summation
            // roundoff of the loss; a halved gradient norm is the
            // noise-robust progress signal there.
            candidate_grad = gradient(data, spec, candidate, retained);
            if (candidate_grad->norm() <= 0.5 * grad_norm) {
                accepted = true;
                break;
            }
            step_scale *= 0.5;
        }
        if (!accepted) break; // no productive step at any damping; keep best iterate

        const double moved = step_scale * step.norm();
        theta = candidate;
        current_loss = candidate_loss;
        grad = candidate_grad ? *candidate_grad : gradient(data, spec, theta, retained);
        grad_norm = grad.norm();
        ++iterations;
        if (grad_norm < report.final_grad_norm) {
            report.theta = theta;
            report.final_grad_norm = grad_norm;
        }
        if (moved <= 1e-15 * (1.0 + theta.norm())) break; // stalled at working precision
    }

    report.iterations = iterations;
    report.converged = report.final_grad_norm <= config.grad_tol;
    return report;
}

} // namespace

FitReport fit(const Dataset& data, const LossSpec& spec, const FitConfig& config) {
    data.validate();
    return newton_minimize(data, spec, all_samples(data.n()), config);
}

FitReport retrain_without(const Dataset& data, const LossSpec& spec,
                          const DropSet& drop, const FitConfig& config) {
    data.validate();
    const IndexList retained = retained_after_drop(drop, data.n());
    FitConfig local = config;
    if (!local.warm_start) {
        FitConfig cold = config;
        cold.warm_start.reset();
        local.warm_start = fit(data, spec, cold).theta;
    }
    return newton_minimize(data, spec, retained, local);
}

ModelState build_state(const Dataset& data, const LossSpec& spec,
                       const Eigen::VectorXd& theta, const IndexList& retained) {
    data.validate();
    spec.validate();
    check_theta(data, theta);
    const Eigen::Index n = data.n();

    ModelState state;
    state.data = &data;
    state.spec = spec;
    state.theta = theta;
    state.retained = retained;
    // hessian() below rejects duplicates/out-of-range, so a size-n list is
    // the full sample regardless of order
    state.full_sample = static_cast<Eigen::Index>(retained.size()) == n;

    const Eigen::VectorXd margins = data.features * theta;
    state.alphas.resize(n);
    state.betas.resize(n);
    if (spec.kind == LossKind::logistic) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double yhat = sigmoid(margins[i]);
            state.alphas[i] = yhat - data.labels[i];
            state.betas[i] = yhat * (1.0 - yhat);
        }
    } else {
        state.alphas = margins - data.labels;
        state.betas = Eigen::VectorXd::Ones(n);
    }

    state.hessian_matrix = hessian(data, spec, theta, retained);
    state.hessian_factor.compute(state.hessian_matrix);
    if (state.hessian_factor.info() != Eigen::Success)
        raise(Errc::singular_hessian, "model-state Hessian is not positive definite");

    // L_i = beta_i x_i^T H^{-1} x_i for every sample, via one matrix solve
    const Eigen::MatrixXd solved = state.hessian_factor.solve(data.features.transpose());
    state.leverages.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        state.leverages[i] = state.betas[i] * data.features.row(i).dot(solved.col(i));

    return state;
}

} // namespace dropkit
