#pragma once

#include <stdexcept>
#include <string>

namespace simxfer {

// Base for anything caused by bad user input (files, flags, shapes).
// The CLI maps these to exit code 2; everything else exits 1.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : InputError {
    using InputError::InputError;
};

struct InvariantError : InputError {
    using InputError::InputError;
};

struct DimensionError : InputError {
    using InputError::InputError;
};

struct MissingCategoryError : InputError {
    using InputError::InputError;
};

struct UnresolvableError : InputError {
    using InputError::InputError;
};

struct IndexMismatchError : InputError {
    using InputError::InputError;
};

struct CoverageError : InputError {
    using InputError::InputError;
};

struct DomainError : InputError {
    using InputError::InputError;
};

struct SingularSystemError : InputError {
    using InputError::InputError;
};

struct MissingRegressorError : InputError {
    using InputError::InputError;
};

struct EmptySubsetError : InputError {
    using InputError::InputError;
};

struct ConfigError : InputError {
    using InputError::InputError;
};

} // namespace simxfer
