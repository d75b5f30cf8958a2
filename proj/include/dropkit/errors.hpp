#pragma once

#include <stdexcept>
#include <string>

namespace dropkit {

/// Domain error categories. The CLI maps these to exit code 1 with a
/// machine-parsable one-line message on stderr.
enum class Errc {
    invalid_subset,
    numerical_overflow,
    singular_hessian,
    leverage_at_one,
    non_convex_ball,
    k_too_large,
    dimension_mismatch,
    insufficient_points,
    zero_error,
    quadrature_failure,
    zero_theta,
    io_failure,
    bad_config,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace dropkit
