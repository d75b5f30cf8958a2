#include "dropkit/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "dropkit/rng.hpp"

namespace dropkit {

void SynthConfig::validate() const {
    if (n < 1 || d < 1) raise(Errc::bad_config, "n and d must be >= 1");
    if (n <= d) raise(Errc::bad_config, "generator requires n > d");
    if (!(theta_star_norm > 0.0)) raise(Errc::bad_config, "theta_star_norm must be > 0");
    if (lambda < 0.0) raise(Errc::bad_config, "lambda must be >= 0");
    if (theta_star_norm < 0.25 || theta_star_norm > 4.0)
        std::fprintf(stderr,
                     "warning: theta_star_norm=%g outside the calibrated [0.25, 4] range\n",
                     theta_star_norm);
}

SynthInstance generate(const SynthConfig& config) {
    config.validate();
    Xoshiro256pp rng(config.seed);

    SynthInstance instance;
    instance.seed = config.seed;

    // planted direction: canonical axis under a seeded random rotation
    instance.theta_star.resize(config.d);
    for (;;) {
        for (Eigen::Index j = 0; j < config.d; ++j) instance.theta_star[j] = rng.normal();
        const double norm = instance.theta_star.norm();
        if (norm > 1e-12) {
            instance.theta_star *= config.theta_star_norm / norm;
            break;
        }
    }

    instance.dataset.features.resize(config.n, config.d);
    for (Eigen::Index i = 0; i < config.n; ++i)
        for (Eigen::Index j = 0; j < config.d; ++j)
            instance.dataset.features(i, j) = rng.normal();

    instance.dataset.labels.resize(config.n);
    const Eigen::VectorXd margins = instance.dataset.features * instance.theta_star;
    for (Eigen::Index i = 0; i < config.n; ++i)
        instance.dataset.labels[i] = rng.uniform() < sigmoid(margins[i]) ? 1.0 : 0.0;

    return instance;
}

namespace {

/// Largest-score indices, ties broken by ascending index, returned sorted.
std::vector<Eigen::Index> top_k_by_score(const Eigen::VectorXd& scores, Eigen::Index k) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

} // namespace

DropSet sample_dropset(const Dataset& data, const ModelState& state,
                       DropStrategy strategy, Eigen::Index k, std::uint64_t seed) {
    const Eigen::Index n = data.n();
    if (k < 0) raise(Errc::bad_config, "k must be >= 0");
    if (k >= n) raise(Errc::k_too_large, "k must be < n");

    DropSet drop;
    drop.strategy = strategy;
    if (k == 0) return drop;

    switch (strategy) {
    case DropStrategy::random: {
        Xoshiro256pp rng(seed);
        std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
        std::iota(pool.begin(), pool.end(), Eigen::Index{0});
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto j = i + static_cast<Eigen::Index>(
                                   rng.below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(k));
        std::sort(pool.begin(), pool.end());
        drop.indices = std::move(pool);
        break;
    }
    case DropStrategy::adversarial_aligned: {
        // seeded unit u orthogonal to theta_hat; samples whose residual signs
        // align with u contribute coherently to the removed gradient
        Xoshiro256pp rng(seed);
        Eigen::VectorXd u(data.d());
        const double theta_norm = state.theta.norm();
        for (;;) {
            for (Eigen::Index j = 0; j < data.d(); ++j) u[j] = rng.normal();
            if (theta_norm > 0.0) u -= (u.dot(state.theta) / (theta_norm * theta_norm)) * state.theta;
            const double norm = u.norm();
            if (norm > 1e-12) {
                u /= norm;
                break;
            }
        }
        const Eigen::VectorXd scores = state.alphas.cwiseProduct(data.features * u);
        drop.indices = top_k_by_score(scores, k);
        break;
    }
    case DropStrategy::leverage_topk:
        drop.indices = top_k_by_score(state.leverages, k);
        break;
    case DropStrategy::explicit_list:
        raise(Errc::bad_config, "explicit drop sets are supplied, not sampled");
    }

    drop.validate(n);
    return drop;
}

} // namespace dropkit
