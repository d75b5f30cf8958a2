#pragma once

#include <cstdint>

#include "dropkit/dataset.hpp"
#include "dropkit/dropset.hpp"
#include "dropkit/erm.hpp"

namespace dropkit {

/// Gaussian-feature logistic benchmark family: x_i ~ N(0, I),
/// y_i ~ Bernoulli(sigma(<theta_star, x_i>)), theta_star a seeded random
/// direction scaled to theta_star_norm.
struct SynthConfig {
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    double theta_star_norm = 1.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;

    /// Requires n > d; warns (stderr) when theta_star_norm leaves [0.25, 4].
    void validate() const;
};

struct SynthInstance {
    Dataset dataset;
    Eigen::VectorXd theta_star;
    std::uint64_t seed = 0;
};

/// Pure function of the config, including the seed; no global RNG state.
SynthInstance generate(const SynthConfig& config);

/// Draws a size-k drop set:
///   random              uniform k-subset without replacement
///   adversarial_aligned seeded unit u orthogonal to theta_hat; takes the k
///                       largest scores alpha_i * <x_i, u> (ties by index)
///   leverage_topk       k largest leverages L_i (ties by index)
/// Throws KTooLarge when k >= n. Works on any dataset, not just synthetic
/// ones; the strategies only read the features and the fitted state.
DropSet sample_dropset(const Dataset& data, const ModelState& state,
                       DropStrategy strategy, Eigen::Index k, std::uint64_t seed);

inline DropSet sample_dropset(const SynthInstance& instance, const ModelState& state,
                              DropStrategy strategy, Eigen::Index k,
                              std::uint64_t seed) {
    return sample_dropset(instance.dataset, state, strategy, k, seed);
}

} // namespace dropkit
