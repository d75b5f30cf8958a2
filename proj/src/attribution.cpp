#include "dropkit/attribution.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include <json.hpp>

namespace dropkit {

const char* method_name(Method method) {
    switch (method) {
    case Method::IF: return "IF";
    case Method::NS: return "NS";
    case Method::RIF: return "RIF";
    case Method::DRIF: return "DRIF";
    case Method::EXACT: return "EXACT";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "IF" || name == "if") return Method::IF;
    if (name == "NS" || name == "ns") return Method::NS;
    if (name == "RIF" || name == "rif") return Method::RIF;
    if (name == "DRIF" || name == "drif") return Method::DRIF;
    if (name == "EXACT" || name == "exact") return Method::EXACT;
    raise(Errc::bad_config, "unknown method: " + name);
}

namespace {

void check_full_sample_state(const ModelState& state, const DropSet& drop) {
    if (!state.full_sample)
        raise(Errc::invalid_subset,
              "attribution requires a state factorized over the full sample");
    drop.validate(state.n());
}

/// sum_{i in T} g_i = X^T c with c_i = alpha_i on T, 0 elsewhere.
Eigen::VectorXd dropped_gradient_sum(const ModelState& state, const DropSet& drop) {
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(state.n());
    for (const Eigen::Index i : drop.indices) coeffs[i] = state.alphas[i];
    return state.data->features.transpose() * coeffs;
}

AttributionEstimate make_estimate(Method method, const ModelState& state,
                                  Eigen::VectorXd delta) {
    AttributionEstimate estimate;
    estimate.method = method;
    estimate.delta = std::move(delta);
    estimate.theta_est = state.theta + estimate.delta;
    return estimate;
}

} // namespace

AttributionEstimate estimate_if(const ModelState& state, const DropSet& drop) {
    check_full_sample_state(state, drop);
    if (drop.k() == 0) return make_estimate(Method::IF, state, Eigen::VectorXd::Zero(state.d()));
    return make_estimate(Method::IF, state, state.solve(dropped_gradient_sum(state, drop)));
}

AttributionEstimate estimate_ns(const ModelState& state, const DropSet& drop,
                                NsSolvePath path) {
    check_full_sample_state(state, drop);
    const Eigen::Index d = state.d();
    const Eigen::Index k = drop.k();
    if (k == 0) return make_estimate(Method::NS, state, Eigen::VectorXd::Zero(d));

    const Eigen::VectorXd rhs = dropped_gradient_sum(state, drop);

    const bool use_woodbury = path == NsSolvePath::woodbury ||
                              (path == NsSolvePath::automatic &&
                               k <= std::min<Eigen::Index>(32, d));
    if (use_woodbury) {
        // rank-k downdate of the cached factorization:
        // (H - U B U^T)^{-1} = H^{-1} + H^{-1}U B^{1/2} (I - W)^{-1} B^{1/2}U^T H^{-1},
        // W = B^{1/2} U^T H^{-1} U B^{1/2}
        Eigen::MatrixXd dropped_rows(k, d);
        Eigen::VectorXd beta_sqrt(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index i = drop.indices[static_cast<std::size_t>(j)];
            dropped_rows.row(j) = state.data->features.row(i);
            beta_sqrt[j] = std::sqrt(state.betas[i]);
        }
        const Eigen::MatrixXd solved = state.hessian_factor.solve(dropped_rows.transpose());
        Eigen::MatrixXd capacitance =
            Eigen::MatrixXd::Identity(k, k) -
            beta_sqrt.asDiagonal() * (dropped_rows * solved) * beta_sqrt.asDiagonal();
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (capacitance + capacitance.transpose()));
        if (llt.info() != Eigen::Success)
            raise(Errc::singular_hessian, "retained Hessian lost positive definiteness");

        const Eigen::VectorXd base = state.solve(rhs);
        const Eigen::VectorXd projected =
            beta_sqrt.asDiagonal() * (dropped_rows * base);
        const Eigen::VectorXd correction = llt.solve(projected);
        return make_estimate(Method::NS, state,
                             base + solved * (beta_sqrt.asDiagonal() * correction));
    }

    const IndexList retained = retained_after_drop(drop, state.n());
    if (state.spec.lambda == 0.0 && static_cast<Eigen::Index>(retained.size()) < d)
        raise(Errc::singular_hessian,
              "drop leaves fewer retained samples than dimensions");
    const Eigen::MatrixXd dropped_hessian =
        hessian(*state.data, state.spec, state.theta, retained);
    Eigen::LLT<Eigen::MatrixXd> llt(dropped_hessian);
    if (llt.info() != Eigen::Success)
        raise(Errc::singular_hessian, "retained Hessian lost positive definiteness");
    return make_estimate(Method::NS, state, llt.solve(rhs));
}

AttributionEstimate estimate_rif(const ModelState& state, const DropSet& drop) {
    check_full_sample_state(state, drop);
    if (drop.k() == 0)
        return make_estimate(Method::RIF, state, Eigen::VectorXd::Zero(state.d()));

    // Sherman-Morrison with g_i parallel to x_i collapses each leave-one-out
    // solve to the scalar 1/(1 - L_i) rescale; one factorized solve total.
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(state.n());
    for (const Eigen::Index i : drop.indices) {
        const double headroom = 1.0 - state.leverages[i];
        if (headroom <= 1e-12)
            raise(Errc::leverage_at_one,
                  "leave-one-out Hessian near singular at sample " + std::to_string(i));
        coeffs[i] = state.alphas[i] / headroom;
    }
    return make_estimate(Method::RIF, state,
                         state.solve(state.data->features.transpose() * coeffs));
}

AttributionEstimate estimate_drif(const ModelState& state, const DropSet& drop) {
    AttributionEstimate rif = estimate_rif(state, drop);
    const double rescale = static_cast<double>(state.n()) /
                           static_cast<double>(state.n() - drop.k());
    AttributionEstimate estimate;
    estimate.method = Method::DRIF;
    estimate.delta = rescale * rif.delta;
    estimate.theta_est = state.theta + estimate.delta;
    return estimate;
}

double ErrorTable::distance(Method a, Method b) const {
    if (a == b) return 0.0;
    for (std::size_t row = 0; row < pairs.size(); ++row) {
        if ((pairs[row].first == a && pairs[row].second == b) ||
            (pairs[row].first == b && pairs[row].second == a))
            return distances[row];
    }
    raise(Errc::bad_config, std::string("pair not in table: ") + method_name(a) + "," +
                                method_name(b));
}

double ErrorTable::delta_norm(Method m) const {
    for (std::size_t row = 0; row < methods.size(); ++row)
        if (methods[row] == m) return delta_norms[row];
    raise(Errc::bad_config, std::string("method not in table: ") + method_name(m));
}

ErrorTable compare(const std::vector<AttributionEstimate>& estimates,
                   const AttributionEstimate& exact) {
    std::vector<const AttributionEstimate*> entries;
    entries.reserve(estimates.size() + 1);
    for (const auto& estimate : estimates) entries.push_back(&estimate);
    entries.push_back(&exact);

    const Eigen::Index d = exact.theta_est.size();
    for (const auto* entry : entries)
        if (entry->theta_est.size() != d || entry->delta.size() != d)
            raise(Errc::dimension_mismatch, "estimates disagree on dimension");

    ErrorTable table;
    for (const auto* entry : entries) {
        table.methods.push_back(entry->method);
        table.delta_norms.push_back(entry->delta.norm());
    }
    // distances via the stored deltas: the shared theta_hat cancels exactly
    for (std::size_t a = 0; a < entries.size(); ++a) {
        for (std::size_t b = a + 1; b < entries.size(); ++b) {
            table.pairs.emplace_back(entries[a]->method, entries[b]->method);
            table.distances.push_back((entries[a]->delta - entries[b]->delta).norm());
        }
    }
    return table;
}

std::string attribution_to_json(const AttributionEstimate& estimate) {
    nlohmann::json out;
    out["method"] = method_name(estimate.method);
    out["theta"] = std::vector<double>(estimate.theta_est.data(),
                                       estimate.theta_est.data() + estimate.theta_est.size());
    out["delta"] = std::vector<double>(estimate.delta.data(),
                                       estimate.delta.data() + estimate.delta.size());
    return out.dump();
}

} // namespace dropkit
