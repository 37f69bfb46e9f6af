#pragma once

#include <stdexcept>
#include <string>

namespace trinet {

/// Raised when an input violates a documented precondition or invariant.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a numerical procedure cannot produce a result (degenerate fit,
/// every training restart diverged, ...).
class ComputationError : public std::runtime_error {
public:
    explicit ComputationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace trinet
