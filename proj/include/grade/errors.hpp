#pragma once

#include <stdexcept>
#include <string>

namespace grade {

struct GradeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, schema violations, contract breaches.
// The CLI maps these to exit code 1.
struct ValidationError : GradeError {
    using GradeError::GradeError;
};

struct IoError : GradeError {
    using GradeError::GradeError;
};

// Failures of an external model backend. The CLI maps these to exit code 2.
struct BackendError : GradeError {
    enum class Kind { transport, schema, config, shortfall };

    BackendError(Kind k, const std::string& msg, bool can_retry = false)
        : GradeError(msg), kind(k), retriable(can_retry) {}

    Kind kind;
    bool retriable;
};

}  // namespace grade
