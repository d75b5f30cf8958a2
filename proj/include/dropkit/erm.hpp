#pragma once

#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "dropkit/dataset.hpp"
#include "dropkit/dropset.hpp"
#include "dropkit/loss.hpp"

namespace dropkit {

using IndexList = std::vector<Eigen::Index>;

/// [0, n).
IndexList all_samples(Eigen::Index n);

/// [0, n) minus the given (validated) drop set.
IndexList retained_after_drop(const DropSet& drop, Eigen::Index n);

/// Objective over a retained subset S:
///   L(theta) = sum_{i in S} l(<theta, x_i>, y_i) + (n*lambda/2)*||theta||^2.
/// The regularizer always carries the full-sample n.
double loss_value(const Dataset& data, const LossSpec& spec,
                  const Eigen::VectorXd& theta, const IndexList& retained);

/// sum_{i in S} alpha_i(theta) x_i + n*lambda*theta,
/// alpha_i = sigma(<theta,x_i>) - y_i (logistic) or <theta,x_i> - y_i.
Eigen::VectorXd gradient(const Dataset& data, const LossSpec& spec,
                         const Eigen::VectorXd& theta, const IndexList& retained);

/// sum_{i in S} beta_i(theta) x_i x_i^T + n*lambda*I, symmetrized exactly.
Eigen::MatrixXd hessian(const Dataset& data, const LossSpec& spec,
                        const Eigen::VectorXd& theta, const IndexList& retained);

/// Directional derivative of the Hessian along v:
///   sum_{i in S} beta_i (1 - 2*yhat_i) <x_i, v> x_i x_i^T.
/// Zero in quadratic mode; the regularizer contributes nothing.
Eigen::MatrixXd third_directional(const Dataset& data, const LossSpec& spec,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& direction,
                                  const IndexList& retained);

struct FitConfig {
    double grad_tol = 1e-10;
    int max_iter = 100;
    double damping = 1.0; // initial Newton step factor, halved on backtracking
    std::optional<Eigen::VectorXd> warm_start;

    void validate() const;
};

struct FitReport {
    Eigen::VectorXd theta;
    double final_grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton on the full sample. Starts from warm_start (default zero),
/// accepts a step only if the loss does not increase (up to 50 halvings;
/// once the comparison falls below summation roundoff, a halved gradient
/// norm counts as progress), stops when ||grad||_2 <= grad_tol. Hitting
/// max_iter returns the best iterate with converged=false. Throws
/// SingularHessian if the curvature loses positive definiteness (lambda=0,
/// rank-deficient data) and, by policy, whenever lambda=0 with fewer
/// retained samples than dimensions.
FitReport fit(const Dataset& data, const LossSpec& spec, const FitConfig& config = {});

/// Exact minimizer of the retained loss: the ground-truth oracle that every
/// closed-form estimate is measured against. Warm starts from
/// config.warm_start when provided (callers normally pass the NS estimate),
/// otherwise from a fresh full-sample fit.
FitReport retrain_without(const Dataset& data, const LossSpec& spec,
                          const DropSet& drop, const FitConfig& config = {});

/// Fitted-model cache: per-sample residuals alpha_i = yhat_i - y_i and
/// curvatures beta_i = yhat_i (1 - yhat_i), a Cholesky factorization of the
/// Hessian over the declared retained subset, and the leverages
/// L_i = beta_i x_i^T H^{-1} x_i. Immutable after construction; estimators
/// reuse the factorization without refactorizing. Holds a non-owning pointer
/// to the dataset, which must outlive the state.
struct ModelState {
    const Dataset* data = nullptr;
    LossSpec spec;
    Eigen::VectorXd theta;
    Eigen::VectorXd alphas;    // n
    Eigen::VectorXd betas;     // n
    Eigen::VectorXd leverages; // n, measured through the factored H
    IndexList retained;
    bool full_sample = false;           // retained == [0, n)
    Eigen::MatrixXd hessian_matrix;     // H over `retained` + n*lambda*I
    Eigen::LLT<Eigen::MatrixXd> hessian_factor;

    Eigen::Index n() const { return data->n(); }
    Eigen::Index d() const { return data->d(); }

    /// Per-sample gradient g_i = alpha_i * x_i.
    Eigen::VectorXd sample_gradient(Eigen::Index i) const {
        return alphas[i] * data->features.row(i).transpose();
    }

    /// H^{-1} rhs through the cached factorization.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        return hessian_factor.solve(rhs);
    }
};

/// Factorizes H over `retained` at theta and populates the caches.
/// Throws SingularHessian when H is not positive definite.
ModelState build_state(const Dataset& data, const LossSpec& spec,
                       const Eigen::VectorXd& theta, const IndexList& retained);

} // namespace dropkit
