#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "dropkit/erm.hpp"
#include "dropkit/synthgen.hpp"
#include "testutil.hpp"

using namespace dropkit;
using testutil::rel_err;

namespace {

Dataset single_sample() {
    Dataset data;
    data.features.resize(1, 2);
    data.features << 1.0, 0.0;
    data.labels.resize(1);
    data.labels << 1.0;
    return data;
}

} // namespace

TEST_CASE("loss: single sample at theta=0 is ln 2") {
    const Dataset data = single_sample();
    const LossSpec spec{LossKind::logistic, 0.0};
    const double value = loss_value(data, spec, Eigen::Vector2d::Zero(), all_samples(1));
    CHECK(value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("loss: empty retained set with lambda=0 is 0") {
    const Dataset data = testutil::random_dataset(10, 3, 1);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd theta = testutil::random_vector(3, 2);
    CHECK(loss_value(data, spec, theta, {}) == 0.0);
}

TEST_CASE("loss: matches independent per-sample summation") {
    const Dataset data = testutil::random_dataset(50, 3, 3);
    const LossSpec spec{LossKind::logistic, 0.01};
    const Eigen::VectorXd theta = 0.7 * testutil::random_vector(3, 4);
    const IndexList retained = all_samples(50);
    const double fast = loss_value(data, spec, theta, retained);
    const double naive = testutil::naive_loss(data, spec, theta, retained);
    CHECK(rel_err(fast, naive) <= 1e-12);
}

TEST_CASE("loss: rejects out-of-range and duplicate subsets") {
    const Dataset data = testutil::random_dataset(5, 2, 5);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd theta = Eigen::Vector2d::Zero();
    CHECK_THROWS_AS(loss_value(data, spec, theta, {7}), Error);
    CHECK_THROWS_AS(loss_value(data, spec, theta, {1, 1}), Error);
}

TEST_CASE("gradient: single sample at theta=0") {
    const Dataset data = single_sample();
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd grad = gradient(data, spec, Eigen::Vector2d::Zero(), all_samples(1));
    CHECK(grad[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(grad[1] == 0.0);
}

TEST_CASE("gradient: empty retained set is zero at lambda=0") {
    const Dataset data = testutil::random_dataset(10, 3, 6);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd grad = gradient(data, spec, testutil::random_vector(3, 7), {});
    CHECK(grad.norm() == 0.0);
}

TEST_CASE("gradient: matches central finite differences of the loss") {
    const Dataset data = testutil::random_dataset(30, 4, 8);
    const LossSpec spec{LossKind::logistic, 0.02};
    const Eigen::VectorXd theta = 0.5 * testutil::random_vector(4, 9);
    const IndexList retained = all_samples(30);
    const Eigen::VectorXd fast = gradient(data, spec, theta, retained);
    const Eigen::VectorXd reference = testutil::fd_gradient(data, spec, theta, retained);
    CHECK(rel_err(fast, reference) <= 1e-6);
}

TEST_CASE("hessian: single sample at theta=0 is x x^T / 4") {
    const Dataset data = single_sample();
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::MatrixXd hess = hessian(data, spec, Eigen::Vector2d::Zero(), all_samples(1));
    CHECK(hess(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(hess(0, 1) == 0.0);
    CHECK(hess(1, 1) == 0.0);
}

TEST_CASE("hessian: empty retained set leaves only the regularizer block") {
    const Dataset data = testutil::random_dataset(10, 2, 10);
    const LossSpec spec{LossKind::logistic, 0.1};
    const Eigen::MatrixXd hess =
        hessian(data, spec, testutil::random_vector(2, 11), {});
    CHECK((hess - Eigen::Matrix2d::Identity()).norm() == 0.0); // n*lambda = 1
}

TEST_CASE("hessian: matches finite differences of the gradient") {
    const Dataset data = testutil::random_dataset(30, 4, 12);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd theta = 0.4 * testutil::random_vector(4, 13);
    const IndexList retained = all_samples(30);
    CHECK(rel_err(hessian(data, spec, theta, retained),
                  testutil::fd_hessian(data, spec, theta, retained)) <= 1e-6);
}

TEST_CASE("third_directional: zero for quadratic loss and at theta=0") {
    const Dataset data = testutil::random_dataset(10, 3, 14);
    const Eigen::VectorXd v = testutil::random_vector(3, 15);
    CHECK(third_directional(data, LossSpec{LossKind::quadratic, 0.0},
                            testutil::random_vector(3, 16), v, all_samples(10))
              .norm() == 0.0);

    const Dataset one = single_sample();
    const Eigen::MatrixXd at_zero =
        third_directional(one, LossSpec{LossKind::logistic, 0.0},
                          Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(), all_samples(1));
    CHECK(at_zero.norm() == 0.0); // yhat = 1/2 kills the 1-2*yhat factor
}

TEST_CASE("third_directional: matches finite differences of the hessian") {
    const Dataset data = testutil::random_dataset(20, 3, 17);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd theta = 0.6 * testutil::random_vector(3, 18);
    const Eigen::VectorXd v = testutil::random_vector(3, 19).normalized();
    const IndexList retained = all_samples(20);
    CHECK(rel_err(third_directional(data, spec, theta, v, retained),
                  testutil::fd_third(data, spec, theta, v, retained)) <= 1e-5);
}

TEST_CASE("derivative chain agrees with finite differences on 10 random instances") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 20 + 7 * trial;
        const Eigen::Index d = 2 + trial % 4;
        const Dataset data = testutil::random_dataset(n, d, 100 + trial);
        const LossSpec spec{LossKind::logistic, trial % 2 ? 0.01 : 0.0};
        const Eigen::VectorXd theta = 0.5 * testutil::random_vector(d, 200 + trial);
        const Eigen::VectorXd v = testutil::random_vector(d, 300 + trial).normalized();
        const IndexList retained = all_samples(n);
        CHECK(rel_err(gradient(data, spec, theta, retained),
                      testutil::fd_gradient(data, spec, theta, retained)) <= 1e-5);
        CHECK(rel_err(hessian(data, spec, theta, retained),
                      testutil::fd_hessian(data, spec, theta, retained)) <= 1e-5);
        CHECK(rel_err(third_directional(data, spec, theta, v, retained),
                      testutil::fd_third(data, spec, theta, v, retained)) <= 1e-5);
    }
}

TEST_CASE("hessian: bitwise symmetric, eigenvalues nonnegative up to roundoff") {
    const Dataset data = testutil::random_dataset(60, 5, 20);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::MatrixXd hess =
        hessian(data, spec, 0.8 * testutil::random_vector(5, 21), all_samples(60));
    for (Eigen::Index i = 0; i < 5; ++i)
        for (Eigen::Index j = 0; j < 5; ++j) CHECK(hess(i, j) == hess(j, i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().maxCoeff());
}

TEST_CASE("fit: symmetric duplicated pair has optimum at zero") {
    Dataset data;
    data.features.resize(2, 2);
    data.features << 1.0, 2.0, 1.0, 2.0;
    data.labels.resize(2);
    data.labels << 1.0, 0.0;
    const LossSpec spec{LossKind::logistic, 0.1};
    const FitReport report = fit(data, spec);
    CHECK(report.converged);
    CHECK(report.theta.norm() <= 1e-10);
}

TEST_CASE("fit: quadratic loss converges in a single undamped step from any start") {
    const Dataset data = testutil::random_dataset(40, 5, 22);
    const LossSpec spec{LossKind::quadratic, 0.01};
    for (std::uint64_t s = 0; s < 3; ++s) {
        FitConfig config;
        config.warm_start = 2.0 * testutil::random_vector(5, 23 + s);
        const double grad0 =
            gradient(data, spec, *config.warm_start, all_samples(40)).norm();
        const FitReport report = fit(data, spec, config);
        CHECK(report.converged);
        CHECK(report.iterations == 1);
        CHECK(report.final_grad_norm <= 1e-8 * (1.0 + grad0));
    }
}

TEST_CASE("fit: recovers the planted parameter at the sqrt(d/n) scale") {
    int hits = 0;
    const int trials = 100;
    for (int s = 0; s < trials; ++s) {
        SynthConfig config;
        config.n = 4000;
        config.d = 10;
        config.theta_star_norm = 1.0;
        config.seed = 9000 + static_cast<std::uint64_t>(s);
        const SynthInstance instance = generate(config);
        const FitReport report = fit(instance.dataset, LossSpec{LossKind::logistic, 0.0});
        REQUIRE(report.converged);
        if ((report.theta - instance.theta_star).norm() <= 5.0 * std::sqrt(10.0 / 4000.0))
            ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("non-finite inputs raise NumericalOverflow") {
    const Dataset data = testutil::random_dataset(10, 2, 55);
    const LossSpec spec{LossKind::logistic, 0.0};
    Eigen::VectorXd theta(2);
    theta << 1.0, std::numeric_limits<double>::infinity();
    try {
        loss_value(data, spec, theta, all_samples(10));
        FAIL("expected NumericalOverflow");
    } catch (const Error& error) {
        CHECK(error.code() == Errc::numerical_overflow);
    }
    CHECK_THROWS_AS(gradient(data, spec, theta, all_samples(10)), Error);
}

TEST_CASE("fit: separable unregularized data reports non-convergence, no limit chasing") {
    // a direction that classifies both samples perfectly with ever-growing
    // margin: no finite stationary point exists
    Dataset data;
    data.features.resize(2, 2);
    data.features << 1.0, 0.0, -1.0, 0.1;
    data.labels.resize(2);
    data.labels << 1.0, 0.0;
    FitConfig config;
    config.max_iter = 3;
    config.grad_tol = 1e-14;
    const FitReport report = fit(data, LossSpec{LossKind::logistic, 0.0}, config);
    CHECK_FALSE(report.converged);
    CHECK(report.iterations == 3);
    CHECK(report.theta.allFinite());
    CHECK(report.final_grad_norm > 0.0);
}

TEST_CASE("fit: unregularized rank-deficient curvature raises SingularHessian") {
    Dataset data;
    data.features.resize(5, 2);
    for (int i = 0; i < 5; ++i) data.features.row(i) << 1.0, 0.0; // rank-1 design
    data.labels.resize(5);
    data.labels << 1, 0, 1, 0, 1;
    CHECK_THROWS_AS(fit(data, LossSpec{LossKind::logistic, 0.0}), Error);

    const Dataset wide = testutil::random_dataset(3, 8, 24); // n < d
    CHECK_THROWS_AS(fit(wide, LossSpec{LossKind::logistic, 0.0}), Error);
}

TEST_CASE("retrain_without: empty drop set reproduces the fit") {
    const Dataset data = testutil::random_dataset(200, 4, 25);
    const LossSpec spec{LossKind::logistic, 0.01};
    const FitReport full = fit(data, spec);
    const FitReport again = retrain_without(data, spec, DropSet{}, FitConfig{});
    CHECK((full.theta - again.theta).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("retrain_without: random logistic drop moves the optimum a sane amount") {
    SynthConfig config;
    config.n = 2000;
    config.d = 8;
    config.seed = 31;
    const SynthInstance instance = generate(config);
    const LossSpec spec{LossKind::logistic, 0.0};
    const FitReport full = fit(instance.dataset, spec);
    REQUIRE(full.converged);

    DropSet drop;
    drop.indices = {17, 170, 1100, 1999};
    const FitReport dropped = retrain_without(instance.dataset, spec, drop, FitConfig{});
    REQUIRE(dropped.converged);
    const double moved = (dropped.theta - full.theta).norm();
    CHECK(moved > 0.0);
    CHECK(moved < 0.05);
}

TEST_CASE("build_state: leverages sum to d at lambda=0 over the full sample") {
    const Dataset data = testutil::random_dataset(100, 5, 26);
    const LossSpec spec{LossKind::logistic, 0.0};
    const Eigen::VectorXd theta = 0.5 * testutil::random_vector(5, 27);
    const ModelState state = build_state(data, spec, theta, all_samples(100));
    CHECK(state.leverages.sum() == doctest::Approx(5.0).epsilon(1e-10));
    for (Eigen::Index i = 0; i < 100; ++i) {
        CHECK(state.betas[i] > 0.0);
        CHECK(state.betas[i] <= 0.25);
        CHECK(state.leverages[i] >= 0.0);
        CHECK(state.leverages[i] < 1.0);
    }
}

TEST_CASE("build_state: huge regularizer drives every leverage to zero") {
    const Dataset data = testutil::random_dataset(50, 3, 28);
    const LossSpec spec{LossKind::logistic, 1e6};
    const ModelState state =
        build_state(data, spec, Eigen::VectorXd::Zero(3), all_samples(50));
    CHECK(state.leverages.maxCoeff() <= 1e-5);
}

TEST_CASE("build_state: leverages match a dense solve, factor reproduces H") {
    const Dataset data = testutil::random_dataset(100, 5, 29);
    const LossSpec spec{LossKind::logistic, 0.003};
    const Eigen::VectorXd theta = 0.6 * testutil::random_vector(5, 30);
    const ModelState state = build_state(data, spec, theta, all_samples(100));

    const Eigen::MatrixXd dense_inverse = state.hessian_matrix.inverse();
    for (Eigen::Index i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = data.features.row(i).transpose();
        const double reference = state.betas[i] * x.dot(dense_inverse * x);
        CHECK(rel_err(state.leverages[i], reference) <= 1e-10);
    }

    // factorization reproduces H in operator norm
    const Eigen::MatrixXd l = state.hessian_factor.matrixL();
    const Eigen::MatrixXd rebuilt = l * l.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gap(rebuilt - state.hessian_matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> scale(state.hessian_matrix);
    CHECK(gap.eigenvalues().cwiseAbs().maxCoeff() <=
          1e-10 * scale.eigenvalues().cwiseAbs().maxCoeff());
}

TEST_CASE("build_state: non-PD curvature raises SingularHessian") {
    Dataset data;
    data.features.resize(4, 2);
    for (int i = 0; i < 4; ++i) data.features.row(i) << 1.0, 0.0;
    data.labels.resize(4);
    data.labels << 1, 0, 1, 0;
    CHECK_THROWS_AS(build_state(data, LossSpec{LossKind::logistic, 0.0},
                                Eigen::Vector2d::Zero(), all_samples(4)),
                    Error);
}
