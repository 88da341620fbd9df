#pragma once

#include <stdexcept>
#include <string>

namespace thinshell {

enum class ErrorKind {
    InvalidParameter,
    ShapeError,
    DataError,
    InvariantViolation,
    StepRejected,
    ConfigurationError,
    PreconditionError,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::ShapeError: return "shape-error";
        case ErrorKind::DataError: return "data-error";
        case ErrorKind::InvariantViolation: return "invariant-violation";
        case ErrorKind::StepRejected: return "step-rejected";
        case ErrorKind::ConfigurationError: return "configuration-error";
        case ErrorKind::PreconditionError: return "precondition-error";
    }
    return "error";
}

}  // namespace thinshell
