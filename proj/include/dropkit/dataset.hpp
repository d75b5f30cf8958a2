#pragma once

#include <string>

#include <Eigen/Core>

#include "dropkit/errors.hpp"

namespace dropkit {

/// Training population: one row of `features` per sample, binary labels.
struct Dataset {
    Eigen::MatrixXd features; // n x d
    Eigen::VectorXd labels;   // n, each entry exactly 0 or 1

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index d() const { return features.cols(); }

    /// Enforces n >= 1, d >= 1, finite features, labels in {0,1}.
    void validate() const;
};

/// CSV with header `y,x1,...,xd`. Labels may be 0/1 or +-1 on read
/// (-1 maps to 0); written files always use 0/1. Values round-trip at
/// 17 significant digits.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

} // namespace dropkit
