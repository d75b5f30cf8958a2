#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dropkit/attribution.hpp"
#include "dropkit/erm.hpp"

namespace dropkit {

enum class SigmaMode { identity, hessian };

const char* sigma_mode_name(SigmaMode mode);
SigmaMode sigma_mode_from_name(const std::string& name);

struct CertificateConfig {
    double radius = 1.0;            // r, extent of the ellipsoid around the NS point
    SigmaMode sigma_mode = SigmaMode::identity;
    int path_grid = 64;             // G, segment evaluations for the drift constant
    int ball_samples = 128;         // M, sphere samples for the curvature floor
    double inflation = 1.1;         // slack multiplier on both sampled constants
    std::uint64_t seed = 0;         // sphere-sampling seed (deterministic output)

    void validate() const;
};

struct CurvatureDriftEstimate {
    double c_h = 0.0;                // inflation * max over the segment grid
    std::vector<double> path_values; // raw ||(H_theta(t) - H) H^{-1} g|| in the dual norm
};

struct CurvatureFloorEstimate {
    double c_op = 0.0;                 // inflation / min sampled eigenvalue floor
    std::vector<double> eigen_floors;  // lambda_min of the whitened Hessian per sample point
    double chord_lipschitz = 0.0;      // max whitened third-derivative norm along sampled chords
};

/// Sampled (not proven) bound on the Newton-step error for one drop set:
/// bound = c_h * c_op when c_h * c_op < radius, +inf sentinel otherwise.
struct Certificate {
    double c_h = 0.0;
    double c_op = 0.0;
    bool condition_ok = false;
    double bound = 0.0;      // infinity when !condition_ok
    bool sampled = true;     // grid/sample estimate, never a proof object
    double radius = 1.0;
    SigmaMode sigma_mode = SigmaMode::identity;
    CurvatureDriftEstimate drift;
    CurvatureFloorEstimate floor;
};

/// Hessian drift along the Newton segment: evaluates
///   v(t) = ||(H_theta(t) - H) H^{-1} g||_{Sigma^{-1}},  theta(t) = theta_hat + t*delta_NS,
/// on t in {0, 1/G, ..., 1} and returns inflation * max_t v(t) with all raw values.
CurvatureDriftEstimate estimate_ch(const ModelState& state, const DropSet& drop,
                                   const CertificateConfig& config);

/// Inverse-curvature ceiling over the Sigma-ball of the given radius around
/// the NS point: samples the center plus ball_samples points on the sphere,
/// takes lambda_min of Sigma^{-1/2} H_theta Sigma^{-1/2} at each, and returns
/// inflation / min. Throws NonConvexBall if any sampled floor is <= 0.
CurvatureFloorEstimate estimate_cop(const ModelState& state, const DropSet& drop,
                                    const CertificateConfig& config);

Certificate certify_ns(const ModelState& state, const DropSet& drop,
                       const CertificateConfig& config);

/// The older global-strong-convexity bound, for comparison:
///   0.5 * c_lip * c_op_global^3 * k^2 * c_ell^2,
/// with c_op_global = 1/(n*lambda), c_ell = max_i ||g_i||_2, and c_lip an
/// inflated empirical max of the third-derivative operator norm over a
/// coarse grid on [0, 2*theta_hat]. Infinite at lambda = 0, where no global
/// curvature floor exists.
struct LegacyBound {
    double c_lip = 0.0;
    double c_op_global = 0.0;
    double c_ell = 0.0;
    Eigen::Index k = 0;
    double bound = 0.0;
};

LegacyBound legacy_bound(const ModelState& state, const DropSet& drop, double lambda);

/// Certificate JSON with all diagnostics; infinities encode as "inf".
std::string certificate_to_json(const Certificate& cert);

} // namespace dropkit
