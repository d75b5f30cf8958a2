#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dropkit/dropset.hpp"
#include "dropkit/erm.hpp"

namespace dropkit {

enum class Method { IF, NS, RIF, DRIF, EXACT };

const char* method_name(Method method);
Method method_from_name(const std::string& name);

/// One closed-form (or exact) answer to "where does the model land if T is
/// removed": theta_est = theta_hat + delta, with delta stored explicitly.
struct AttributionEstimate {
    Method method = Method::IF;
    Eigen::VectorXd theta_est;
    Eigen::VectorXd delta;
};

/// First-order removal effect through the full-sample Hessian:
///   delta = H^{-1} sum_{i in T} g_i  (one factorized solve).
/// Additive over disjoint drop sets.
AttributionEstimate estimate_if(const ModelState& state, const DropSet& drop);

/// How the retained-Hessian system inside estimate_ns is solved.
enum class NsSolvePath { automatic, woodbury, refactor };

/// One Newton step on the retained loss from theta_hat:
///   delta solves (H - sum_{i in T} beta_i x_i x_i^T) delta = sum_{i in T} g_i.
/// The automatic path uses a rank-k Woodbury correction to the cached
/// factorization when k <= min(32, d), otherwise refactorizes the retained
/// Hessian; both can be forced. Throws SingularHessian if the retained
/// Hessian is not positive definite.
AttributionEstimate estimate_ns(const ModelState& state, const DropSet& drop,
                                NsSolvePath path = NsSolvePath::automatic);

/// Sum of leave-one-out Newton steps. Because g_i is parallel to x_i, each
/// rank-one downdate collapses to a scalar rescale:
///   delta = sum_{i in T} H^{-1} g_i / (1 - L_i).
/// Throws LeverageAtOne when any 1 - L_i <= 1e-12.
AttributionEstimate estimate_rif(const ModelState& state, const DropSet& drop);

/// RIF further rescaled by the retained fraction:
///   delta = n/(n-k) * delta_RIF, exactly.
AttributionEstimate estimate_drif(const ModelState& state, const DropSet& drop);

/// Pairwise L2 distances among a set of estimates plus per-method step
/// magnitudes ||delta||_2. Rows are keyed by ordered method pairs.
struct ErrorTable {
    std::vector<std::pair<Method, Method>> pairs;
    std::vector<double> distances;
    std::vector<Method> methods;
    std::vector<double> delta_norms;

    double distance(Method a, Method b) const;
    double delta_norm(Method m) const;
};

/// Builds the full pairwise table over `estimates` and `exact`.
/// Throws DimensionMismatch if the vectors disagree on d.
ErrorTable compare(const std::vector<AttributionEstimate>& estimates,
                   const AttributionEstimate& exact);

/// {"method": "...", "theta": [...], "delta": [...]} (17-digit reals).
std::string attribution_to_json(const AttributionEstimate& estimate);

} // namespace dropkit
