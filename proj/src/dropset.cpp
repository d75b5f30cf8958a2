#include "dropkit/dropset.hpp"

namespace dropkit {

const char* drop_strategy_name(DropStrategy strategy) {
    switch (strategy) {
    case DropStrategy::random: return "random";
    case DropStrategy::adversarial_aligned: return "adversarial_aligned";
    case DropStrategy::leverage_topk: return "leverage_topk";
    case DropStrategy::explicit_list: return "explicit";
    }
    return "?";
}

DropStrategy drop_strategy_from_name(const std::string& name) {
    if (name == "random") return DropStrategy::random;
    if (name == "adversarial_aligned" || name == "adversarial")
        return DropStrategy::adversarial_aligned;
    if (name == "leverage_topk" || name == "leverage") return DropStrategy::leverage_topk;
    if (name == "explicit") return DropStrategy::explicit_list;
    raise(Errc::bad_config, "unknown drop strategy: " + name);
}

void DropSet::validate(Eigen::Index n) const {
    if (k() >= n) raise(Errc::k_too_large, "drop set must leave at least one sample");
    Eigen::Index previous = -1;
    for (const Eigen::Index index : indices) {
        if (index < 0 || index >= n)
            raise(Errc::invalid_subset, "drop index out of range: " + std::to_string(index));
        if (index <= previous)
            raise(Errc::invalid_subset, "drop indices must be strictly increasing");
        previous = index;
    }
}

} // namespace dropkit
