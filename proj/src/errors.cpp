#include "dropkit/errors.hpp"

namespace dropkit {

const char* errc_name(Errc code) {
    switch (code) {
    case Errc::invalid_subset: return "InvalidSubset";
    case Errc::numerical_overflow: return "NumericalOverflow";
    case Errc::singular_hessian: return "SingularHessian";
    case Errc::leverage_at_one: return "LeverageAtOne";
    case Errc::non_convex_ball: return "NonConvexBall";
    case Errc::k_too_large: return "KTooLarge";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::insufficient_points: return "InsufficientPoints";
    case Errc::zero_error: return "ZeroError";
    case Errc::quadrature_failure: return "QuadratureFailure";
    case Errc::zero_theta: return "ZeroTheta";
    case Errc::io_failure: return "IoFailure";
    case Errc::bad_config: return "BadConfig";
    }
    return "Unknown";
}

} // namespace dropkit
