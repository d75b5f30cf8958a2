#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "dropkit/errors.hpp"

namespace dropkit {

enum class DropStrategy { random, adversarial_aligned, leverage_topk, explicit_list };

const char* drop_strategy_name(DropStrategy strategy);
DropStrategy drop_strategy_from_name(const std::string& name);

/// A subset T of sample indices to remove, with the strategy that produced
/// it. Indices are strictly increasing, 0-based, and |T| < n.
struct DropSet {
    std::vector<Eigen::Index> indices;
    DropStrategy strategy = DropStrategy::explicit_list;

    Eigen::Index k() const { return static_cast<Eigen::Index>(indices.size()); }

    /// Checks ordering, duplicates, and the 0 <= index < n, |T| < n bounds.
    void validate(Eigen::Index n) const;
};

} // namespace dropkit
